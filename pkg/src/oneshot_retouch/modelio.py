"""Binary model files.

Layout (little-endian)::

    b"OSR1"
    u32 version          (1)
    u32 n_L
    u32 K                (0 marks an MLP-regressor model)
    u32 patch_size
    u32 hidden
    u8  channel_mode     bit 0: per-channel (3 trained planes), bit 1: strict band scales
    u8  leaky_slope * 100
    u64 seed
    then for each trained channel, for each band l = 0..n_L:
        K * d * d  f64   matrices A_k, row-major      (absent when K == 0)
        W1 b1 W2 b2 W3 b3 f64, row-major, W as (out, in)
"""

from __future__ import annotations

import struct

import numpy as np

from .blend import BandMap, RegressorMap, RetouchModel, WeightField

MAGIC = b"OSR1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIBBQ")
_F64 = np.dtype("<f8")


class ModelFormatError(ValueError):
    pass


class NotAModelError(ModelFormatError):
    pass


class ModelVersionError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


def _slope_byte(slope: float) -> int:
    b = int(round(slope * 100))
    if not 0 <= b <= 255 or b / 100 != slope:
        raise ModelFormatError(f"leaky slope {slope} is not representable as a multiple of 0.01 in [0, 2.55]")
    return b


def model_to_bytes(model: RetouchModel) -> bytes:
    mode = (1 if model.channel_mode == "per_channel" else 0) | (2 if model.scheme == "strict" else 0)
    header = _HEADER.pack(MAGIC, VERSION, model.n_levels, model.K, model.patch_size, model.hidden,
                          mode, _slope_byte(model.leaky_slope), model.seed)
    chunks = [header]
    for maps in model.band_maps:
        for m in maps:
            arrays = m.params()
            chunks.extend(np.ascontiguousarray(a, dtype=_F64).tobytes() for a in arrays)
    return b"".join(chunks)


def save_model(model: RetouchModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def model_from_bytes(buf: bytes) -> RetouchModel:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise NotAModelError("not a model file")
    if len(buf) < _HEADER.size:
        raise TruncatedModelError("truncated model file")
    _, version, n_levels, K, patch_size, hidden, mode, slope, seed = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise ModelVersionError(f"unsupported model version {version}")
    d = patch_size * patch_size
    n_channels = 3 if mode & 1 else 1
    out_dim = K if K else d
    shapes = [(K, d, d)] if K else []
    shapes += [(hidden, d), (hidden,), (hidden, hidden), (hidden,), (out_dim, hidden), (out_dim,)]
    pos = _HEADER.size
    slope_f = slope / 100
    band_maps = []
    for _ in range(n_channels):
        maps = []
        for _ in range(n_levels + 1):
            arrays = []
            for shape in shapes:
                n = int(np.prod(shape))
                end = pos + 8 * n
                if end > len(buf):
                    raise TruncatedModelError("truncated model file")
                arrays.append(np.frombuffer(buf, dtype=_F64, count=n, offset=pos).astype(np.float64).reshape(shape))
                pos = end
            if K:
                maps.append(BandMap(arrays[0], WeightField(*arrays[1:], leaky_slope=slope_f)))
            else:
                maps.append(RegressorMap(WeightField(*arrays, leaky_slope=slope_f)))
        band_maps.append(maps)
    if pos != len(buf):
        raise ModelFormatError(f"{len(buf) - pos} unexpected trailing bytes in model file")
    return RetouchModel(
        n_levels=n_levels,
        patch_size=patch_size,
        channel_mode="per_channel" if mode & 1 else "luma_only",
        band_maps=band_maps,
        scheme="strict" if mode & 2 else "default",
        hidden=hidden,
        leaky_slope=slope_f,
        seed=seed,
    )


def load_model(path) -> RetouchModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def models_equal(a: RetouchModel, b: RetouchModel) -> bool:
    """Bitwise equality of everything the file format stores."""
    return model_to_bytes(a) == model_to_bytes(b)
