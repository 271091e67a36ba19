"""Grayscale image I/O and resampling.

Images are plain 2-D ``numpy.float64`` arrays in row-major order with a
nominal intensity range of [0, 255].  Values stay high-precision through
the whole processing chain; quantization to 8 bit happens only when a
file is written.

Accepted input formats: binary PGM (P5, maxval 255) and 8-bit PNG
(grayscale or RGB).  Output is always PGM, which round-trips bit-exactly.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import (
    ImageFormatError,
    ImageReadError,
    UnsupportedImageError,
)

IMAGE_MAX = 255.0

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

# BT.601 luma weights.
_LUMA_R = 0.299
_LUMA_G = 0.587
_LUMA_B = 0.114


def to_grayscale(r, g, b):
    """BT.601 luma from (r, g, b) in [0, 255]; accepts scalars or arrays.

    Inputs are clamped to [0, 255]; the result is rounded to the nearest
    integer intensity (ties to even) and returned as float64.
    """
    r = np.clip(np.asarray(r, dtype=np.float64), 0.0, IMAGE_MAX)
    g = np.clip(np.asarray(g, dtype=np.float64), 0.0, IMAGE_MAX)
    b = np.clip(np.asarray(b, dtype=np.float64), 0.0, IMAGE_MAX)
    y = np.rint(_LUMA_R * r + _LUMA_G * g + _LUMA_B * b)
    if y.ndim == 0:
        return float(y)
    return y


def _tokenize_pgm_header(data: bytes):
    """Yield the first 4 header tokens of a PNM file and the raster offset."""
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < 4:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i] not in (0x0A, 0x0D):
                i += 1
            continue
        if i >= n:
            raise ImageFormatError("truncated PGM header")
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        tokens.append(data[start:i])
    if i >= n:
        raise ImageFormatError("PGM header not followed by raster data")
    i += 1  # single whitespace byte separates header from raster
    return tokens, i


def _decode_pgm(data: bytes) -> np.ndarray:
    tokens, offset = _tokenize_pgm_header(data)
    if tokens[0] != b"P5":
        raise ImageFormatError(f"not a binary PGM file (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError("non-numeric PGM header field") from exc
    if width < 1 or height < 1:
        raise ImageFormatError(f"invalid PGM dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedImageError(f"only 8-bit PGM supported, got maxval {maxval}")
    raster = data[offset : offset + width * height]
    if len(raster) < width * height:
        raise ImageFormatError("truncated PGM raster")
    return (
        np.frombuffer(raster, dtype=np.uint8)
        .reshape(height, width)
        .astype(np.float64)
    )


def _decode_png(data: bytes) -> np.ndarray:
    try:
        with PILImage.open(io.BytesIO(data)) as img:
            img.load()
            mode = img.mode
            if mode == "L":
                return np.asarray(img, dtype=np.float64)
            if mode == "RGB":
                rgb = np.asarray(img, dtype=np.float64)
                return to_grayscale(rgb[..., 0], rgb[..., 1], rgb[..., 2])
            raise UnsupportedImageError(
                f"unsupported PNG mode {mode!r} (need 8-bit grayscale or RGB)"
            )
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        # PIL signals truncation via OSError and bad chunks via SyntaxError
        raise ImageFormatError("corrupt PNG data") from exc


def load_image_bytes(data: bytes) -> np.ndarray:
    """Decode PGM or PNG bytes to a float64 grayscale array."""
    if data[:2] == b"P5":
        return _decode_pgm(data)
    if data[:8] == _PNG_MAGIC:
        return _decode_png(data)
    raise UnsupportedImageError("unrecognized image format (need PGM P5 or PNG)")


def load_image(path) -> np.ndarray:
    """Load a grayscale image from `path` (PGM P5 or 8-bit PNG).

    RGB PNG input is converted with :func:`to_grayscale`.  Raises
    ImageReadError if the file cannot be read, ImageFormatError for
    malformed content, UnsupportedImageError for modes we do not handle.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ImageReadError(f"cannot read {path}: {exc}") from exc
    if not data:
        raise ImageFormatError(f"empty image file: {path}")
    return load_image_bytes(data)


def encode_pgm(img: np.ndarray) -> bytes:
    """Quantize to 8 bit (clamp + round) and encode as binary PGM."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected non-empty 2-D image, got shape {img.shape}")
    quantized = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    height, width = quantized.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + quantized.tobytes()


def save_image(img: np.ndarray, path) -> None:
    """Write `img` to `path` as binary PGM (values clamped to [0, 255])."""
    data = encode_pgm(img)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise ImageReadError(f"cannot write {path}: {exc}") from exc


def quantize(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] and round to integers, as file export would."""
    return np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0.0, 255.0)


def center_crop_even(img: np.ndarray) -> np.ndarray:
    """Center-crop to even height and width (drops at most one row/column)."""
    h, w = img.shape
    eh, ew = h - (h % 2), w - (w % 2)
    top = (h - eh) // 2
    left = (w - ew) // 2
    return img[top : top + eh, left : left + ew]


def _cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Two-lobe cubic convolution kernel (Keys, a = -0.5 by default)."""
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    inner = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    outer = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    return np.where(ax <= 1.0, inner, np.where(ax < 2.0, outer, 0.0))


def _upscale_axis0_x2(arr: np.ndarray) -> np.ndarray:
    """Double the first axis with cubic convolution, half-pixel centers."""
    n = arr.shape[0]
    out_idx = np.arange(2 * n, dtype=np.float64)
    src = (out_idx + 0.5) / 2.0 - 0.5
    base = np.floor(src).astype(np.int64)
    taps = base[:, None] + np.arange(-1, 3)[None, :]
    weights = _cubic_kernel(src[:, None] - taps)
    taps = np.clip(taps, 0, n - 1)  # edge replication
    gathered = arr[taps.reshape(-1)].reshape(2 * n, 4, *arr.shape[1:])
    w = weights.reshape(2 * n, 4, *([1] * (arr.ndim - 1)))
    return (gathered * w).sum(axis=1)


def bicubic_upscale_x2(img: np.ndarray) -> np.ndarray:
    """Upscale by exactly 2x in both dimensions with bicubic interpolation.

    Output pixel (i, j) samples input coordinate ((i+0.5)/2 - 0.5,
    (j+0.5)/2 - 0.5); boundaries are edge-replicated.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected 2-D image, got shape {img.shape}")
    up = _upscale_axis0_x2(img)
    return _upscale_axis0_x2(up.T).T
