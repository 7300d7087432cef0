"""Overlapping patch extraction and overlap-averaged reassembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PADDING_MODES = ("valid", "replicate")


@dataclass
class PatchSet:
    """Row-major flattened patches plus the geometry needed to put them back.

    ``patches[i]`` is the patch whose top-left corner sits at grid cell
    ``divmod(i, cols)`` times ``stride`` in the (possibly padded) band.
    """

    patches: np.ndarray  # (N, patch_size**2)
    patch_size: int
    stride: int
    grid: tuple[int, int]  # (rows, cols)
    source_size: tuple[int, int]  # (width, height)
    padding: str

    @property
    def n(self) -> int:
        return self.patches.shape[0]

    @property
    def d(self) -> int:
        return self.patch_size * self.patch_size

    def with_patches(self, patches: np.ndarray) -> "PatchSet":
        return PatchSet(np.asarray(patches, dtype=np.float64), self.patch_size, self.stride,
                        self.grid, self.source_size, self.padding)


def _pad(patch_size: int, padding: str) -> int:
    if padding == "replicate":
        return patch_size // 2
    if padding == "valid":
        return 0
    raise ValueError(f"unknown padding mode {padding!r}")


def extract_patches(band: np.ndarray, patch_size: int = 3, stride: int = 1,
                    padding: str = "valid") -> PatchSet:
    if patch_size < 1 or patch_size % 2 == 0:
        raise ValueError(f"patch_size must be odd, got {patch_size}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    band = np.asarray(band, dtype=np.float64)
    h, w = band.shape
    r = _pad(patch_size, padding)
    if r:
        band = np.pad(band, r, mode="edge")
    if band.shape[0] < patch_size or band.shape[1] < patch_size:
        raise ValueError(f"band {w}x{h} smaller than patch size {patch_size}")
    win = sliding_window_view(band, (patch_size, patch_size))[::stride, ::stride]
    rows, cols = win.shape[:2]
    patches = win.reshape(rows * cols, patch_size * patch_size).copy()
    return PatchSet(patches, patch_size, stride, (rows, cols), (w, h), padding)


def coverage(ps: PatchSet) -> np.ndarray:
    """Number of in-bounds patch cells landing on each pixel."""
    return _scatter(np.ones_like(ps.patches), ps)[1]


def _scatter(values: np.ndarray, ps: PatchSet) -> tuple[np.ndarray, np.ndarray]:
    p, s = ps.patch_size, ps.stride
    rows, cols = ps.grid
    w, h = ps.source_size
    r = _pad(p, ps.padding)
    ph, pw = h + 2 * r, w + 2 * r
    acc = np.zeros((ph, pw))
    cnt = np.zeros((ph, pw))
    cube = values.reshape(rows, cols, p, p)
    # fixed (dy, dx) loop order keeps accumulation deterministic
    for dy in range(p):
        for dx in range(p):
            ys = slice(dy, dy + (rows - 1) * s + 1, s)
            xs = slice(dx, dx + (cols - 1) * s + 1, s)
            acc[ys, xs] += cube[:, :, dy, dx]
            cnt[ys, xs] += 1.0
    return acc[r:r + h, r:r + w], cnt[r:r + h, r:r + w]


def assemble_patches(ps: PatchSet) -> np.ndarray:
    """Average every patch cell covering a pixel; uncovered pixels are 0."""
    rows, cols = ps.grid
    if ps.patches.shape != (rows * cols, ps.d):
        raise ValueError(
            f"patch matrix {ps.patches.shape} does not match grid {rows}x{cols} with d={ps.d}"
        )
    acc, cnt = _scatter(ps.patches, ps)
    out = np.zeros_like(acc)
    np.divide(acc, cnt, out=out, where=cnt > 0)
    return out
