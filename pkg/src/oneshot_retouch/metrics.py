"""PSNR, SSIM and the log-scaled Fourier magnitude difference image."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .image_io import ImageBuf

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _as_array(x) -> np.ndarray:
    if isinstance(x, ImageBuf):
        x = x.data
    return np.asarray(x, dtype=np.float64)


def psnr(a, b, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); ``math.inf`` when the inputs are identical."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _ssim_window() -> np.ndarray:
    x = np.arange(SSIM_WIN) - SSIM_WIN // 2
    g = np.exp(-(x * x) / (2.0 * SSIM_SIGMA ** 2))
    return g / g.sum()


def _valid_filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0), g, axis=1)
    return out[r:-r, r:-r]


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean structural similarity over all fully-inside 11x11 Gaussian windows (sigma 1.5)."""
    a, b = _as_array(a), _as_array(b)
    if a.ndim == 3:
        if a.shape[2] != 1:
            raise ValueError("ssim expects single-channel input")
        a, b = a[:, :, 0], b[:, :, 0]
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WIN:
        raise ValueError(f"ssim needs at least {SSIM_WIN}x{SSIM_WIN} pixels")
    g = _ssim_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_a, mu_b = _valid_filter(a, g), _valid_filter(b, g)
    s_aa = _valid_filter(a * a, g) - mu_a * mu_a
    s_bb = _valid_filter(b * b, g) - mu_b * mu_b
    s_ab = _valid_filter(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * s_ab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (s_aa + s_bb + c2)
    return float(np.mean(num / den))


def fft_magnitude_diff(a, b) -> np.ndarray:
    """| |F(255 a)| - |F(255 b)| | with zero frequency at the centre."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a, b = a[:, :, 0], b[:, :, 0]
    fa = np.abs(np.fft.fft2(255.0 * a))
    fb = np.abs(np.fft.fft2(255.0 * b))
    return np.fft.fftshift(np.abs(fa - fb))


def fft_diff(a, b) -> ImageBuf:
    """Difference spectrum clamped to [1, 1e5] and shown as log10(D) / 5."""
    d = np.clip(fft_magnitude_diff(a, b), 1.0, 1e5)
    return ImageBuf.from_array(np.log10(d) / 5.0)


@dataclass
class EvalReport:
    psnr_db: float
    ssim: float
    per_image: list = field(default_factory=list)  # (name, psnr, ssim)

    @classmethod
    def from_pairs(cls, items) -> "EvalReport":
        """``items`` yields (name, output plane, reference plane); aggregates are per-image means."""
        rows = [(name, psnr(out, ref), ssim(out, ref)) for name, out, ref in items]
        if not rows:
            raise ValueError("nothing to evaluate")
        return cls(float(np.mean([r[1] for r in rows])), float(np.mean([r[2] for r in rows])), rows)

    def lines(self) -> list[str]:
        out = [f"{name} PSNR_dB={p:.4f} SSIM={s:.6f}" for name, p, s in self.per_image]
        out.append(f"MEAN PSNR_dB={self.psnr_db:.4f} SSIM={self.ssim:.6f}")
        return out
