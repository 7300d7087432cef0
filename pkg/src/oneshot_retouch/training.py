"""Per-band fitting of patch maps under the mean l1 patch loss.

Gradients are derived by hand for exactly the two architectures in
:mod:`oneshot_retouch.blend`; there is no autodiff.  Randomness comes from
``numpy.random.default_rng([seed, channel, band])`` (PCG64), one stream per
band so bands are independent of each other and of training order.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .blend import (
    CHANNEL_MODES,
    BandMap,
    RegressorMap,
    RetouchModel,
    WeightField,
    leaky_relu,
    softmax,
)
from .image_io import ImageBuf, rgb_to_ycbcr_array
from .patches import extract_patches
from .pyramid import SCALE_SCHEMES, decompose

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    K: int = 256
    n_levels: int = 5
    patch_size: int = 3
    hidden: int = 32
    lr: float = 1e-2
    decay: float = 0.96
    epochs: int = 300
    batch: int = 4096
    seed: int = 0
    leaky_slope: float = 0.01
    channel_mode: str = "luma_only"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_noise: float = 0.01
    baseline: str = "blend"  # or "regressor"
    scheme: str = "default"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.K < 1 or self.batch < 1 or self.epochs < 0 or self.hidden < 1:
            raise ValueError("K, batch and hidden must be >= 1 and epochs >= 0")
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ValueError("patch_size must be odd")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"unknown channel mode {self.channel_mode!r}")
        if self.baseline not in ("blend", "regressor"):
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.scheme not in SCALE_SCHEMES:
            raise ValueError(f"unknown scale scheme {self.scheme!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr * cfg.decay ** epoch


@dataclass
class PatchPairSet:
    X: np.ndarray
    Y: np.ndarray
    band: int
    channel: int = 0

    def __post_init__(self):
        if self.X.shape != self.Y.shape:
            raise ValueError(f"patch sets differ in shape: {self.X.shape} vs {self.Y.shape}")

    @property
    def n(self) -> int:
        return self.X.shape[0]


class MisalignedPairError(ValueError):
    pass


def trained_planes(img: ImageBuf, channel_mode: str) -> list[np.ndarray]:
    if img.channels == 1:
        return [img.plane(0)]
    ycc = rgb_to_ycbcr_array(img.data)
    n = 1 if channel_mode == "luma_only" else 3
    return [ycc[:, :, c] for c in range(n)]


def build_dataset(before: ImageBuf, after: ImageBuf, cfg: TrainConfig) -> list[list[PatchPairSet]]:
    """Positionally paired valid-mode patches, ``[channel][band]``."""
    if before.data.shape != after.data.shape:
        raise MisalignedPairError(
            f"example pair must be pixel-aligned: before is {before.width}x{before.height}x{before.channels}, "
            f"after is {after.width}x{after.height}x{after.channels}"
        )
    out = []
    for c, (pb, pa) in enumerate(zip(trained_planes(before, cfg.channel_mode),
                                     trained_planes(after, cfg.channel_mode))):
        xb = decompose(pb, cfg.n_levels, cfg.scheme)
        ya = decompose(pa, cfg.n_levels, cfg.scheme)
        sets = []
        for l, (bx, by) in enumerate(zip(xb.bands, ya.bands)):
            px = extract_patches(bx, cfg.patch_size, 1, "valid")
            py = extract_patches(by, cfg.patch_size, 1, "valid")
            sets.append(PatchPairSet(px.patches, py.patches, l, c))
        out.append(sets)
    return out


def l1_loss_and_grad(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error per patch entry, averaged over a batch if 2-D.

    The subgradient uses sign(0) == 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    r = pred - target
    scale = r.size
    return float(np.abs(r).sum() / scale), np.sign(r) / scale


def _field_backward(fld: WeightField, X, h1, a1, h2, a2, dz):
    s = fld.leaky_slope
    dW3 = dz.T @ a2
    db3 = dz.sum(axis=0)
    dh2 = (dz @ fld.W3) * np.where(h2 > 0, 1.0, s)
    dW2 = dh2.T @ a1
    db2 = dh2.sum(axis=0)
    dh1 = (dh2 @ fld.W2) * np.where(h1 > 0, 1.0, s)
    dW1 = dh1.T @ X
    db1 = dh1.sum(axis=0)
    return [dW1, db1, dW2, db2, dW3, db3]


def blend_loss_and_grads(bm: BandMap, X: np.ndarray, Y: np.ndarray):
    """Mean l1 loss of ``bm`` on a batch and its gradient for every parameter in ``bm.params()``."""
    if X.shape[-1] != bm.d or Y.shape != X.shape:
        raise ValueError(f"batch shapes {X.shape}/{Y.shape} do not fit a map with d={bm.d}")
    K, d = bm.K, bm.d
    h1, a1, h2, a2, z = bm.field.hidden(X)
    f = softmax(z)
    A_flat = bm.A.reshape(K, d * d)
    M = (f @ A_flat).reshape(-1, d, d)
    pred = np.einsum("nij,nj->ni", M, X)
    loss, g = l1_loss_and_grad(pred, Y)
    # dL/dM_n = g_n x_n^T, shared by the matrix and the field paths
    G = (g[:, :, None] * X[:, None, :]).reshape(-1, d * d)
    dA = (f.T @ G).reshape(K, d, d)
    df = G @ A_flat.T
    dz = f * (df - (f * df).sum(axis=1, keepdims=True))
    return loss, [dA] + _field_backward(bm.field, X, h1, a1, h2, a2, dz)


def regressor_loss_and_grads(rm: RegressorMap, X: np.ndarray, Y: np.ndarray):
    if X.shape[-1] != rm.d or Y.shape != X.shape:
        raise ValueError(f"batch shapes {X.shape}/{Y.shape} do not fit a map with d={rm.d}")
    s = rm.net.leaky_slope
    h1, a1, h2, a2, z = rm.net.hidden(X)
    pred = leaky_relu(z, s)
    loss, g = l1_loss_and_grad(pred, Y)
    dz = g * np.where(z > 0, 1.0, s)
    return loss, _field_backward(rm.net, X, h1, a1, h2, a2, dz)


def loss_and_grads(m, X, Y):
    if isinstance(m, RegressorMap):
        return regressor_loss_and_grads(m, X, Y)
    return blend_loss_and_grads(m, X, Y)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, lr_t: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state disagree in length")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr_t * (m / c1) / (np.sqrt(v / c2) + eps)


def init_band_map(cfg: TrainConfig, d: int, rng: np.random.Generator):
    if cfg.baseline == "regressor":
        return RegressorMap(WeightField.init([d, cfg.hidden, cfg.hidden, d], rng, cfg.leaky_slope))
    A = np.eye(d)[None] + cfg.init_noise * rng.standard_normal((cfg.K, d, d))
    fld = WeightField.init([d, cfg.hidden, cfg.hidden, cfg.K], rng, cfg.leaky_slope)
    return BandMap(A, fld)


@dataclass
class BandResult:
    band_map: object
    losses: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def train_band(pairs: PatchPairSet, cfg: TrainConfig, rng: np.random.Generator | None = None,
               on_epoch: Callable[[int, int, float, float], None] | None = None) -> BandResult:
    """Fit one band map with shuffled mini-batch Adam; one decay step per epoch."""
    if pairs.n < 1:
        raise ValueError("cannot train on an empty patch set")
    if rng is None:
        rng = np.random.default_rng([cfg.seed, pairs.channel, pairs.band])
    m = init_band_map(cfg, pairs.X.shape[1], rng)
    params = m.params()
    state = AdamState.zeros_like(params)
    losses = []
    n = pairs.n
    for epoch in range(cfg.epochs):
        lr_t = lr_at(cfg, epoch)
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch):
            idx = perm[start:start + cfg.batch]
            loss, grads = loss_and_grads(m, pairs.X[idx], pairs.Y[idx])
            adam_step(params, grads, state, lr_t, cfg.beta1, cfg.beta2, cfg.eps)
            total += loss * len(idx)
        losses.append(total / n)
        if on_epoch is not None:
            on_epoch(epoch, pairs.band, lr_t, losses[-1])
    return BandResult(m, losses)


def format_log_line(epoch: int, band: int, lr: float, loss: float, channel: int = 0) -> str:
    return f"epoch={epoch} channel={channel} band={band} lr={lr:.6e} loss={loss:.9e}"


def train(before: ImageBuf, after: ImageBuf, cfg: TrainConfig,
          log_stream=None) -> tuple[RetouchModel, list[list[BandResult]]]:
    """Fit one map per band per trained channel from a single aligned pair."""
    if before.channels == 1 and cfg.channel_mode != "luma_only":
        # a grayscale pair has a single plane to learn
        cfg = replace(cfg, channel_mode="luma_only")
    dataset = build_dataset(before, after, cfg)
    results = []
    for sets in dataset:
        row = []
        for pairs in sets:
            def on_epoch(epoch, band, lr, loss, _c=pairs.channel):
                line = format_log_line(epoch, band, lr, loss, _c)
                if log_stream is not None:
                    log_stream.write(line + "\n")
                log.debug(line)
            row.append(train_band(pairs, cfg, on_epoch=on_epoch))
        results.append(row)
    model = RetouchModel(
        n_levels=cfg.n_levels,
        patch_size=cfg.patch_size,
        channel_mode=cfg.channel_mode,
        band_maps=[[r.band_map for r in row] for row in results],
        scheme=cfg.scheme,
        hidden=cfg.hidden,
        leaky_slope=cfg.leaky_slope,
        seed=cfg.seed,
        config_hash=cfg.config_hash(),
    )
    return model, results


def expected_param_count(cfg: TrainConfig, n_channels: int = 1) -> int:
    """(n_L+1) * [K d^2 + (d H + H) + (H H + H) + (H K + K)] per trained channel."""
    d, H, K = cfg.patch_size ** 2, cfg.hidden, cfg.K
    if cfg.baseline == "regressor":
        per_band = (d * H + H) + (H * H + H) + (H * d + d)
    else:
        per_band = K * d * d + (d * H + H) + (H * H + H) + (H * K + K)
    return n_channels * (cfg.n_levels + 1) * per_band


# --- finite-difference verification ---------------------------------------

def _kink_signature(m, X, Y) -> tuple:
    if isinstance(m, RegressorMap):
        h1, _, h2, _, z = m.net.hidden(X)
        pred = leaky_relu(z, m.net.leaky_slope)
        return (h1 > 0, h2 > 0, z > 0, np.sign(pred - Y))
    h1, _, h2, _, _ = m.field.hidden(X)
    return (h1 > 0, h2 > 0, np.sign(m(X) - Y))


def _same_signature(a, b) -> bool:
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def numerical_gradient(m, X, Y, h: float = 1e-6, skip_kinks: bool = False):
    """Central differences of the batch loss for every parameter.

    With ``skip_kinks`` an entry is NaN when the +/-h probe changes any
    Leaky-ReLU or l1 sign pattern, i.e. the parameter sits within h of a kink.
    """
    base = _kink_signature(m, X, Y) if skip_kinks else None
    out = []
    for p in m.params():
        g = np.empty_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_and_grads(m, X, Y)[0]
            kink = skip_kinks and not _same_signature(base, _kink_signature(m, X, Y))
            flat[i] = orig - h
            lm = loss_and_grads(m, X, Y)[0]
            kink = kink or (skip_kinks and not _same_signature(base, _kink_signature(m, X, Y)))
            flat[i] = orig
            gflat[i] = np.nan if kink else (lp - lm) / (2.0 * h)
        out.append(g)
    return out


def grad_check(m, X, Y, h: float = 1e-6) -> float:
    """Worst relative error between analytic and central-difference gradients, kinks excluded.

    Entries are compared relative to ``max(|analytic|, |numeric|, floor)``
    where ``floor = 1e5 * eps * max(|loss|, 1) / h`` sits well above the
    cancellation noise of the difference quotient.
    """
    loss, analytic = loss_and_grads(m, X, Y)
    numeric = numerical_gradient(m, X, Y, h, skip_kinks=True)
    floor = 1e5 * np.finfo(float).eps * max(abs(loss), 1.0) / h
    worst = 0.0
    for a, n in zip(analytic, numeric):
        ok = ~np.isnan(n)
        if not ok.any():
            continue
        a, n = a[ok], n[ok]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
