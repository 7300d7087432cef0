"""Gaussian filtering and the difference-of-Gaussians band decomposition.

Band ``l`` is ``X - G(2)*X`` for ``l == 0`` and ``G(2^l)*X - G(2^(l+1))*X``
otherwise; the residual is ``G(2^(n_L+1))*X``.  Every band is computed at
full resolution and then box-downsampled by its scale factor.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d, map_coordinates

# band scale schemes: "default" keeps a 2x guard band, "strict" decimates
# at the nominal band frequency
SCALE_SCHEMES = ("default", "strict")
UPSAMPLE_METHODS = ("cubic", "bilinear")
DEFAULT_UPSAMPLE = "cubic"


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Discrete Gaussian truncated at radius ceil(3*sigma), summing to 1."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a 2-D band with replicate borders."""
    k = gaussian_kernel(sigma)
    out = correlate1d(np.asarray(img, dtype=np.float64), k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")


def band_scales(n_levels: int, scheme: str = "default") -> tuple[list[int], int]:
    """Downsample factors for bands 0..n_L and for the residual."""
    if scheme == "default":
        bands = [1] + [2 ** (l - 1) for l in range(1, n_levels + 1)]
        residual = max(1, 2 ** (n_levels - 1))
    elif scheme == "strict":
        bands = [2 ** l for l in range(n_levels + 1)]
        residual = 2 ** n_levels
    else:
        raise ValueError(f"unknown scale scheme {scheme!r}")
    return bands, residual


def downsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Box-average over factor x factor blocks; partial edge blocks average what they cover."""
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"downsample factor must be an integer >= 1, got {factor}")
    img = np.asarray(img, dtype=np.float64)
    if factor == 1:
        return img.copy()
    h, w = img.shape
    oh, ow = -(-h // factor), -(-w // factor)
    ph, pw = oh * factor - h, ow * factor - w
    padded = np.zeros((oh * factor, ow * factor))
    padded[:h, :w] = img
    counts = np.zeros_like(padded)
    counts[:h, :w] = 1.0
    s = padded.reshape(oh, factor, ow, factor).sum(axis=(1, 3))
    c = counts.reshape(oh, factor, ow, factor).sum(axis=(1, 3))
    if ph == 0 and pw == 0:
        return s / (factor * factor)
    return s / c


@lru_cache(maxsize=256)
def _interp_matrix(n_out: int, n_in: int, factor: float, method: str) -> np.ndarray:
    # pixel-centre aligned: output sample i sits at (i + 0.5) / factor - 0.5 in input units
    pos = (np.arange(n_out) + 0.5) / factor - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    if method == "bilinear":
        i0 = np.floor(pos).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        t = pos - i0
        m = np.zeros((n_out, n_in))
        rows = np.arange(n_out)
        np.add.at(m, (rows, i0), 1.0 - t)
        np.add.at(m, (rows, i1), t)
    elif method == "cubic":
        # columns are the interpolants of unit impulses, so m @ v == spline interpolation of v
        m = np.empty((n_out, n_in))
        for j in range(n_in):
            e = np.zeros(n_in)
            e[j] = 1.0
            m[:, j] = map_coordinates(e, pos[None, :], order=3, mode="nearest")
    else:
        raise ValueError(f"unknown interpolation {method!r}")
    m.setflags(write=False)
    return m


def upsample(
    img: np.ndarray,
    size: tuple[int, int],
    factor: float | None = None,
    method: str = DEFAULT_UPSAMPLE,
) -> np.ndarray:
    """Resize a band to ``size == (width, height)`` by separable interpolation.

    ``factor`` is the scale the band was decimated by; when omitted it is
    inferred from the size ratio.  ``method`` is ``"cubic"`` (B-spline) or
    ``"bilinear"``.
    """
    w, h = size
    if w < 1 or h < 1:
        raise ValueError(f"target size must be positive, got {size}")
    img = np.asarray(img, dtype=np.float64)
    ih, iw = img.shape
    if (ih, iw) == (h, w) and factor in (None, 1):
        return img.copy()
    fy = float(factor if factor is not None else h / ih)
    fx = float(factor if factor is not None else w / iw)
    my = _interp_matrix(h, ih, fy, method)
    mx = _interp_matrix(w, iw, fx, method)
    return my @ img @ mx.T


@dataclass
class LaplacianPyramid:
    n_levels: int
    bands: list[np.ndarray]
    residual: np.ndarray
    band_scales: list[int]
    residual_scale: int
    source_size: tuple[int, int]  # (width, height)
    scheme: str = field(default="default")


def min_size(n_levels: int) -> int:
    return 2 ** (n_levels + 1)


def decompose_full(img: np.ndarray, n_levels: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Full-resolution bands and residual; these sum exactly back to ``img``."""
    if n_levels < 0:
        raise ValueError("n_levels must be >= 0")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("decompose expects a single-channel band")
    need = min_size(n_levels)
    if min(img.shape) < need:
        raise ValueError(
            f"image {img.shape[1]}x{img.shape[0]} too small for n_L={n_levels}; needs >= {need} px per side"
        )
    blurred = [img] + [gaussian_blur(img, 2.0 ** l) for l in range(1, n_levels + 2)]
    bands = [blurred[l] - blurred[l + 1] for l in range(n_levels + 1)]
    return bands, blurred[-1]


def decompose(img: np.ndarray, n_levels: int, scheme: str = "default") -> LaplacianPyramid:
    bands_full, residual_full = decompose_full(img, n_levels)
    scales, rscale = band_scales(n_levels, scheme)
    bands = [downsample(b, f) for b, f in zip(bands_full, scales)]
    h, w = np.shape(img)
    return LaplacianPyramid(
        n_levels=n_levels,
        bands=bands,
        residual=downsample(residual_full, rscale),
        band_scales=scales,
        residual_scale=rscale,
        source_size=(w, h),
        scheme=scheme,
    )


def _check_shape(arr: np.ndarray, factor: int, size: tuple[int, int]) -> None:
    w, h = size
    expect = (-(-h // factor), -(-w // factor))
    if arr.shape != expect:
        raise ValueError(f"band of shape {arr.shape} inconsistent with scale {factor} (expected {expect})")


def reconstruct(pyr: LaplacianPyramid, method: str = DEFAULT_UPSAMPLE) -> np.ndarray:
    """Upsample every band and the residual to the source size and sum."""
    if len(pyr.bands) != len(pyr.band_scales) or len(pyr.bands) != pyr.n_levels + 1:
        raise ValueError("pyramid band count does not match its scale table")
    size = pyr.source_size
    _check_shape(pyr.residual, pyr.residual_scale, size)
    out = upsample(pyr.residual, size, pyr.residual_scale, method)
    for band, f in zip(pyr.bands, pyr.band_scales):
        _check_shape(band, f, size)
        out += upsample(band, size, f, method)
    return out
