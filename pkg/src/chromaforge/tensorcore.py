"""Dense float64 tensors, RGB images in [0, 1], and 8-bit image file I/O.

Tensors are plain ``numpy`` arrays of dtype float64. The helpers below add
the strict shape rules the rest of the package relies on: no implicit
broadcasting except between a tensor and a scalar, and argmax ties resolved
toward the smallest index.

Supported files are binary PPM (P6, maxval 255) and 8-bit RGB PNG. Masks
are read from binary PGM (P5) or 8-bit grayscale PNG.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

DTYPE = np.float64


class ShapeError(ValueError):
    """Operands of a tensor op have incompatible shapes."""


class ImageFormatError(ValueError):
    """The file is not a supported image format."""


class TruncatedImageError(ImageFormatError):
    """The image payload is shorter than its header declares."""


class ChannelError(ImageFormatError):
    """The image does not have exactly three 8-bit color channels."""


# -- tensor ops -------------------------------------------------------------


def tensor(data, shape=None) -> np.ndarray:
    """Build a float64 tensor, optionally from flat row-major ``data``."""
    arr = np.asarray(data, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if math.prod(shape) != arr.size:
            raise ShapeError(f"{arr.size} values do not fill shape {shape}")
        arr = arr.reshape(shape)
    return arr


def _same_shape(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim and b.ndim and a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def add(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return a + b


def sub(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return a - b


def mul(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return a * b


def scale(a, s: float) -> np.ndarray:
    return np.asarray(a, dtype=DTYPE) * float(s)


def total(a) -> float:
    return float(np.sum(a))


def maximum(a) -> float:
    return float(np.max(a))


def argmax(a) -> int:
    # np.argmax already returns the first occurrence of the maximum
    return int(np.argmax(np.asarray(a).reshape(-1)))


def clamp(a, lo: float, hi: float) -> np.ndarray:
    return np.clip(np.asarray(a, dtype=DTYPE), lo, hi)


def dot(a, b) -> float:
    a, b = _same_shape(a, b)
    if a.ndim != 1:
        raise ShapeError("dot expects 1-d tensors")
    return float(a @ b)


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


# -- images -----------------------------------------------------------------


@dataclass(frozen=True)
class LabeledImage:
    image: np.ndarray
    label: int


def check_image(img: np.ndarray) -> np.ndarray:
    """Return ``img`` as float64 after checking the H x W x 3, [0, 1] contract."""
    img = np.asarray(img, dtype=DTYPE)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected an H x W x 3 image, got {img.shape}")
    if not np.all(np.isfinite(img)) or img.min(initial=0.0) < 0.0 or img.max(initial=0.0) > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def quantize(img: np.ndarray) -> np.ndarray:
    """Round to 8 bits, half away from zero (values are non-negative)."""
    scaled = np.asarray(img, dtype=DTYPE) * 255.0
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)


def _read_pnm_header(buf: bytes, magic: bytes) -> tuple[int, int, int, int]:
    """Parse a binary PNM header; return (width, height, maxval, payload offset)."""
    if not buf.startswith(magic):
        raise ImageFormatError(f"not a {magic.decode()} file")
    fields: list[int] = []
    pos = 2
    n = len(buf)
    while len(fields) < 3:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and buf[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            if pos >= n:
                raise TruncatedImageError("header ends early")
            raise ImageFormatError("malformed header")
        fields.append(int(buf[start:pos]))
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise TruncatedImageError("header ends early")
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}")
    return width, height, maxval, pos + 1


def _decode_pnm(buf: bytes, magic: bytes, channels: int) -> np.ndarray:
    width, height, _, off = _read_pnm_header(buf, magic)
    need = width * height * channels
    payload = buf[off:]
    if len(payload) < need:
        raise TruncatedImageError(f"payload has {len(payload)} bytes, header needs {need}")
    arr = np.frombuffer(payload[:need], dtype=np.uint8)
    return arr.reshape((height, width, channels) if channels > 1 else (height, width))


def _load_bytes(path) -> tuple[bytes, np.ndarray | None]:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] == b"P6":
        return buf, _decode_pnm(buf, b"P6", 3)
    if buf[:2] in (b"P5", b"P3", b"P2", b"P1", b"P4"):
        return buf, None
    if buf.startswith(b"\x89PNG\r\n\x1a\n"):
        return buf, None
    raise ImageFormatError(f"{path}: unsupported image format")


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB PPM or PNG as an H x W x 3 float64 array of byte/255."""
    buf, data = _load_bytes(path)
    if data is None:
        if buf[:2] == b"P5":
            raise ChannelError(f"{path}: single-channel image, expected RGB")
        if buf[:1] == b"P":
            raise ImageFormatError(f"{path}: only binary P6 PPM is supported")
        data = _load_png(path, "RGB")
    return data.astype(DTYPE) / 255.0


def _load_png(path, want: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if want == "RGB" and mode != "RGB":
                raise ChannelError(f"{path}: PNG mode {mode}, expected 8-bit RGB")
            if want == "L" and mode not in ("L", "P"):
                raise ChannelError(f"{path}: PNG mode {mode}, expected 8-bit grayscale")
            return np.array(im, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise TruncatedImageError(f"{path}: {exc}") from exc


def save_image(img: np.ndarray, path) -> None:
    """Write ``img`` as 8-bit PNG or PPM depending on the file suffix."""
    img = check_image(img)
    data = quantize(img)
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pnm"):
        h, w, _ = data.shape
        blob = f"P6\n{w} {h}\n255\n".encode() + data.tobytes()
        with open(path, "wb") as fh:
            fh.write(blob)
    elif suffix == ".png":
        Image.fromarray(data).save(path, format="PNG")
    else:
        raise ImageFormatError(f"cannot save {path}: use .ppm or .png")


def load_mask(path) -> np.ndarray:
    """Read an 8-bit single-channel PGM (P5) or PNG of region indices."""
    buf = Path(path).read_bytes()
    if buf[:2] == b"P5":
        return _decode_pnm(buf, b"P5", 1).astype(np.int64)
    if buf.startswith(b"\x89PNG\r\n\x1a\n"):
        return _load_png(path, "L").astype(np.int64)
    raise ImageFormatError(f"{path}: masks must be P5 PGM or grayscale PNG")


def save_mask(regions: np.ndarray, path) -> None:
    regions = np.asarray(regions)
    if regions.ndim != 2 or regions.min(initial=0) < 0 or regions.max(initial=0) > 255:
        raise ValueError("mask must be a 2-d array of values in [0, 255]")
    data = regions.astype(np.uint8)
    path = Path(path)
    if path.suffix.lower() == ".png":
        Image.fromarray(data).save(path, format="PNG")
    else:
        h, w = data.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(os.fspath(path), "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
