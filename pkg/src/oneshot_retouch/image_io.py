"""Raster container, 8-bit PNG/PPM/PGM I/O and Y'CbCr conversion."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

# BT.601 full-range luma weights
KR, KG, KB = 0.299, 0.587, 0.114
CB_SCALE = 2.0 * (1.0 - KB)  # 1.772
CR_SCALE = 2.0 * (1.0 - KR)  # 1.402


class ImageIOError(ValueError):
    pass


class UnreadableImageError(ImageIOError):
    pass


class UnsupportedBitDepthError(ImageIOError):
    pass


class MalformedHeaderError(ImageIOError):
    pass


class ChannelCountError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ImageBuf:
    """Float raster in [0, 1], stored as a (height, width, channels) array."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ChannelCountError(f"expected 1 or 3 channels, got shape {data.shape}")
        if data.size and (data.min() < 0.0 or data.max() > 1.0 or not np.isfinite(data).all()):
            raise ValueError("ImageBuf samples must lie in [0, 1]")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr, clip: bool = True) -> "ImageBuf":
        arr = np.asarray(arr, dtype=np.float64)
        if clip:
            arr = np.clip(arr, 0.0, 1.0)
        return cls(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def plane(self, c: int = 0) -> np.ndarray:
        return np.array(self.data[:, :, c])

    def __eq__(self, other):
        if not isinstance(other, ImageBuf):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)


def _read_pnm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedHeaderError("unexpected end of PNM header")
    return buf[start:pos], pos


def _load_pnm(buf: bytes, path) -> np.ndarray:
    magic = buf[:2]
    channels = 3 if magic == b"P6" else 1
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_pnm_token(buf, pos)
        if not tok.isdigit():
            raise MalformedHeaderError(f"{path}: non-numeric PNM header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"{path}: invalid dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedBitDepthError(f"{path}: maxval {maxval}, only 255 is supported")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise MalformedHeaderError(f"{path}: missing whitespace after PNM header")
    pos += 1
    count = width * height * channels
    payload = buf[pos:pos + count]
    if len(payload) != count:
        raise MalformedHeaderError(f"{path}: expected {count} raster bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)


def _load_png(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise UnsupportedBitDepthError(f"{path}: {mode} PNG, only 8-bit is supported")
            if mode in ("1", "L", "P", "LA"):
                arr = np.asarray(im.convert("L"))[:, :, None]
            else:
                arr = np.asarray(im.convert("RGB"))
    except ImageIOError:
        raise
    except Exception as exc:
        raise UnreadableImageError(f"{path}: {exc}") from exc
    return arr


def load_image(path) -> ImageBuf:
    """Load an 8-bit PNG or binary PPM/PGM file; samples are byte/255."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise UnreadableImageError(f"{path}: {exc.strerror or exc}") from exc
    if buf[:2] in (b"P5", b"P6"):
        arr = _load_pnm(buf, path)
    elif buf[:8] == b"\x89PNG\r\n\x1a\n":
        arr = _load_png(path)
    else:
        raise UnreadableImageError(f"{path}: not a PNG or binary PPM/PGM file")
    return ImageBuf(arr.astype(np.float64) / 255.0)


def to_bytes(img: ImageBuf) -> np.ndarray:
    return np.rint(img.data * 255.0).astype(np.uint8)


def save_image(img: ImageBuf, path) -> None:
    """Write ``img`` as PNG, or as PPM/PGM when the suffix says so."""
    arr = to_bytes(img)
    ext = os.path.splitext(str(path))[1].lower()
    try:
        if ext in (".ppm", ".pgm", ".pnm"):
            if ext == ".ppm" and img.channels == 1:
                arr = np.repeat(arr, 3, axis=2)
            elif ext == ".pgm" and img.channels == 3:
                raise ChannelCountError("PGM output needs a single-channel image")
            magic = b"P6" if arr.shape[2] == 3 else b"P5"
            header = magic + b"\n%d %d\n255\n" % (arr.shape[1], arr.shape[0])
            with open(path, "wb") as fh:
                fh.write(header + arr.tobytes())
        else:
            from PIL import Image

            mode = "L" if arr.shape[2] == 1 else "RGB"
            Image.fromarray(arr[:, :, 0] if mode == "L" else arr, mode=mode).save(path, format="PNG")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def rgb_to_ycbcr_array(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    # written relative to G so achromatic pixels give Y == v exactly
    y = g + KR * (r - g) + KB * (b - g)
    cb = (b - y) / CB_SCALE + 0.5
    cr = (r - y) / CR_SCALE + 0.5
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb_array(ycc: np.ndarray) -> np.ndarray:
    """Unclamped inverse of :func:`rgb_to_ycbcr_array`."""
    y = ycc[..., 0]
    cb = ycc[..., 1] - 0.5
    cr = ycc[..., 2] - 0.5
    r = y + CR_SCALE * cr
    b = y + CB_SCALE * cb
    g = y - (KR * (r - y) + KB * (b - y)) / KG
    return np.stack([r, g, b], axis=-1)


def rgb_to_ycbcr(img: ImageBuf) -> ImageBuf:
    if img.channels != 3:
        raise ChannelCountError(f"rgb_to_ycbcr needs 3 channels, got {img.channels}")
    # in-gamut RGB maps into [0,1]; clip only guards rounding
    return ImageBuf.from_array(rgb_to_ycbcr_array(img.data))


def ycbcr_to_rgb(img: ImageBuf) -> ImageBuf:
    if img.channels != 3:
        raise ChannelCountError(f"ycbcr_to_rgb needs 3 channels, got {img.channels}")
    return ImageBuf.from_array(ycbcr_to_rgb_array(img.data))


def luma(img: ImageBuf) -> np.ndarray:
    """Y plane of an image; a grayscale image is its own luma."""
    if img.channels == 1:
        return img.plane(0)
    return rgb_to_ycbcr_array(img.data)[:, :, 0]
