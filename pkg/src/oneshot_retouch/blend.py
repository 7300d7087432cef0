"""Patch maps: softmax-weighted blends of linear transforms, and the MLP regressor baseline.

A band map sends a patch ``x`` to ``sum_k f_k(x) A_k x`` where ``f`` is a
three-layer Leaky-ReLU network with a softmax head.  The regressor baseline
has the same layers but outputs the patch directly through a Leaky ReLU.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .image_io import ImageBuf, rgb_to_ycbcr_array, ycbcr_to_rgb_array
from .patches import assemble_patches, extract_patches
from .pyramid import DEFAULT_UPSAMPLE, band_scales, decompose, reconstruct

CHANNEL_MODES = ("luma_only", "per_channel")


def leaky_relu(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, z, slope * z)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class WeightField:
    """Three fully connected layers ``d -> H -> H -> K``.

    Weights are stored as (out, in) so a layer computes ``W @ x + b``.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    leaky_slope: float = 0.01

    @property
    def dims(self) -> list[int]:
        return [self.W1.shape[1], self.W1.shape[0], self.W2.shape[0], self.W3.shape[0]]

    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]

    def hidden(self, X: np.ndarray):
        """Pre- and post-activation values of the two hidden layers and the logits."""
        s = self.leaky_slope
        h1 = X @ self.W1.T + self.b1
        a1 = leaky_relu(h1, s)
        h2 = a1 @ self.W2.T + self.b2
        a2 = leaky_relu(h2, s)
        z = a2 @ self.W3.T + self.b3
        return h1, a1, h2, a2, z

    @classmethod
    def init(cls, dims, rng: np.random.Generator, leaky_slope: float = 0.01) -> "WeightField":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
        arrays = []
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(n_in)
            arrays.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
            arrays.append(rng.uniform(-bound, bound, size=n_out))
        return cls(*arrays, leaky_slope=leaky_slope)

    @classmethod
    def zeros(cls, dims, leaky_slope: float = 0.01) -> "WeightField":
        arrays = []
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            arrays += [np.zeros((n_out, n_in)), np.zeros(n_out)]
        return cls(*arrays, leaky_slope=leaky_slope)


def _check_dim(x: np.ndarray, d: int) -> None:
    if x.shape[-1] != d:
        raise ValueError(f"patch dimension {x.shape[-1]} does not match map dimension {d}")


def field_weights(field: WeightField, x: np.ndarray) -> np.ndarray:
    """Blending weights on the simplex for one patch ``(d,)`` or a batch ``(N, d)``."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, field.dims[0])
    return softmax(field.hidden(x)[-1])


@dataclass
class BandMap:
    A: np.ndarray  # (K, d, d)
    field: WeightField

    def __post_init__(self):
        K, d, d2 = self.A.shape
        if d != d2 or self.field.dims[0] != d or self.field.dims[-1] != K:
            raise ValueError(f"matrices {self.A.shape} inconsistent with field dims {self.field.dims}")

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.A] + self.field.params()

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return map_patch(self, X)


def map_patch(bm: BandMap, x: np.ndarray) -> np.ndarray:
    """``sum_k f_k(x) A_k x`` for a single patch or a batch of patches."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, bm.d)
    single = x.ndim == 1
    X = x[None, :] if single else x
    f = field_weights(bm.field, X)
    # sum_k f_k A_k is formed first: one (K, d*d) product instead of K mat-vecs per patch
    M = (f @ bm.A.reshape(bm.K, -1)).reshape(-1, bm.d, bm.d)
    y = np.einsum("nij,nj->ni", M, X)
    return y[0] if single else y


@dataclass
class RegressorMap:
    """MLP ``d -> H -> H -> d`` with Leaky ReLU after every layer."""

    net: WeightField

    @property
    def d(self) -> int:
        return self.net.dims[0]

    def params(self) -> list[np.ndarray]:
        return self.net.params()

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return map_patch_regressor(self, X)


def map_patch_regressor(rm: RegressorMap, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, rm.d)
    return leaky_relu(rm.net.hidden(x)[-1], rm.net.leaky_slope)


@dataclass
class RetouchModel:
    n_levels: int
    patch_size: int
    channel_mode: str
    band_maps: list[list]  # [channel][band] -> BandMap | RegressorMap
    scheme: str = "default"
    hidden: int = 32
    leaky_slope: float = 0.01
    seed: int = 0
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"unknown channel mode {self.channel_mode!r}")
        for maps in self.band_maps:
            if len(maps) != self.n_levels + 1:
                raise ValueError(f"expected {self.n_levels + 1} band maps per channel, got {len(maps)}")
            if any(m.d != self.patch_size ** 2 for m in maps):
                raise ValueError("band maps disagree on patch dimension")

    @property
    def kind(self) -> str:
        return "regressor" if isinstance(self.band_maps[0][0], RegressorMap) else "blend"

    @property
    def K(self) -> int:
        return 0 if self.kind == "regressor" else self.band_maps[0][0].K

    @property
    def band_scales(self) -> list[int]:
        return band_scales(self.n_levels, self.scheme)[0]

    def n_params(self) -> int:
        return sum(m.n_params() for maps in self.band_maps for m in maps)


def identity_band_map(K: int, d: int, hidden: int, rng=None, leaky_slope: float = 0.01) -> BandMap:
    """Every A_k is the identity; the field is random (or zero without ``rng``)."""
    dims = [d, hidden, hidden, K]
    fld = WeightField.init(dims, rng, leaky_slope) if rng is not None else WeightField.zeros(dims, leaky_slope)
    return BandMap(np.repeat(np.eye(d)[None], K, axis=0), fld)


def apply_to_plane(model: RetouchModel, maps: list, plane: np.ndarray,
                   method: str = DEFAULT_UPSAMPLE) -> np.ndarray:
    """Retouch one channel plane; the low-pass residual passes through untouched."""
    pyr = decompose(plane, model.n_levels, model.scheme)
    new_bands = []
    for band, m in zip(pyr.bands, maps):
        ps = extract_patches(band, model.patch_size, 1, "replicate")
        new_bands.append(assemble_patches(ps.with_patches(m(ps.patches))))
    pyr.bands = new_bands
    return reconstruct(pyr, method)


def apply_planes(model: RetouchModel, img: ImageBuf, method: str = DEFAULT_UPSAMPLE) -> np.ndarray:
    """Mapped planes before clamping: Y'CbCr for colour input, the single plane otherwise."""
    planes = rgb_to_ycbcr_array(img.data) if img.channels == 3 else img.data.copy()
    out = planes.copy()
    n = min(len(model.band_maps), planes.shape[2])
    for c in range(n):
        out[:, :, c] = apply_to_plane(model, model.band_maps[c], planes[:, :, c], method)
    return out


def apply_model(model: RetouchModel, img: ImageBuf, method: str = DEFAULT_UPSAMPLE) -> ImageBuf:
    planes = apply_planes(model, img, method)
    if img.channels == 3:
        return ImageBuf.from_array(ycbcr_to_rgb_array(planes))
    return ImageBuf.from_array(planes)
