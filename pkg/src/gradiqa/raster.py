"""Grayscale raster loading, PGM/PNG codecs, convolution, and downsampling.

A "plane" throughout this package is a 2-D float64 numpy array, row-major.
Loaded images are scaled to [0, 1]; derived planes (gradients, locally
normalized luminance, paired products) share the layout but are unbounded.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimensionError, FormatError, ParameterError

# Minimum side length for a plane entering feature extraction.  Guarantees
# the quarter-scale plane of a 64x64 input still admits 7x7 windows.
MIN_SIDE = 16

# ITU-R BT.601 luma weights, applied to 8-bit RGB before scaling.
_LUMA = np.array([0.299, 0.587, 0.114])

_PIL_SUFFIXES = {".png", ".bmp"}


def luma_from_rgb(rgb: np.ndarray) -> np.ndarray:
    """Collapse an (h, w, 3) array of 8-bit RGB samples to one luma plane."""
    return np.asarray(rgb, dtype=np.float64) @ _LUMA


def read_pgm(path) -> np.ndarray:
    """Decode an 8-bit binary (P5) or ASCII (P2) PGM file to a [0, 1] plane."""
    raw = Path(path).read_bytes()
    if raw[:2] not in (b"P2", b"P5"):
        raise FormatError(f"{path}: not a PGM file (bad magic {raw[:2]!r})")
    binary = raw[:2] == b"P5"

    # Header: magic, width, height, maxval; '#' comments run to end of line.
    pos = 2
    fields = []
    while len(fields) < 3:
        m = re.compile(rb"\s*(?:#[^\n]*\n)*\s*(\d+)").match(raw, pos)
        if m is None:
            raise FormatError(f"{path}: truncated PGM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: empty PGM ({width}x{height})")

    if binary:
        pos += 1  # single whitespace byte after maxval
        if len(raw) - pos < height * width:
            raise FormatError(f"{path}: PGM pixel data truncated")
        data = np.frombuffer(raw, dtype=np.uint8, count=height * width, offset=pos)
    else:
        values = raw[pos:].split()
        if len(values) < height * width:
            raise FormatError(f"{path}: PGM pixel data truncated")
        data = np.array([int(v) for v in values[: height * width]], dtype=np.uint16)
        if data.max(initial=0) > 255:
            raise FormatError(f"{path}: sample exceeds maxval 255")
    return data.reshape(height, width).astype(np.float64) / 255.0


def write_pgm(plane: np.ndarray, path, ascii_format: bool = False) -> None:
    """Write a [0, 1] plane as an 8-bit PGM (binary P5 unless ascii_format)."""
    samples = np.rint(np.clip(plane, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = samples.shape
    path = Path(path)
    if ascii_format:
        lines = [f"P2\n{w} {h}\n255\n"]
        lines += [" ".join(str(v) for v in row) + "\n" for row in samples]
        path.write_text("".join(lines))
    else:
        path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + samples.tobytes())


def _read_with_pil(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.float64) / 255.0
        if img.mode == "RGB":
            return luma_from_rgb(np.asarray(img)) / 255.0
        raise FormatError(
            f"{path}: unsupported pixel mode {img.mode!r} (need 8-bit gray or RGB)"
        )


def load_grayscale(path, min_side: int = MIN_SIDE) -> np.ndarray:
    """Load an image file as a [0, 1] grayscale plane.

    8-bit samples map to v/255; color inputs are converted with BT.601 luma
    first.  Supported formats: PGM (P2/P5), PNG, BMP.  Images smaller than
    ``min_side`` on either axis are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        plane = read_pgm(path)
    elif suffix in _PIL_SUFFIXES:
        plane = _read_with_pil(path)
    else:
        raise FormatError(f"{path}: unsupported image format {suffix!r}")
    h, w = plane.shape
    if h < min_side or w < min_side:
        raise DimensionError(f"{path}: image {h}x{w} is smaller than {min_side}x{min_side}")
    return plane


def require_plane(plane: np.ndarray, min_side: int = 1, name: str = "plane") -> np.ndarray:
    """Validate a 2-D float plane and return it as float64."""
    arr = np.asarray(plane, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < min_side or arr.shape[1] < min_side:
        raise DimensionError(
            f"{name} is {arr.shape[0]}x{arr.shape[1]}, need at least {min_side}x{min_side}"
        )
    return arr


def convolve_same(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Convolve a plane with a centered odd-sided kernel, same output shape.

    out(i, j) = sum_{k,l} taps(k, l) * plane(i - k, j - l) over the centered
    support; boundaries are handled by edge replication so constant regions
    stay exact at the borders.
    """
    plane = require_plane(plane)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise DimensionError(f"kernel must be odd and square, got shape {kernel.shape}")
    if not np.all(np.isfinite(kernel)):
        raise ParameterError("kernel taps must be finite")
    if kernel.shape[0] > min(plane.shape):
        raise DimensionError(
            f"kernel side {kernel.shape[0]} exceeds plane {plane.shape[0]}x{plane.shape[1]}"
        )
    return ndimage.convolve(plane, kernel, mode="nearest")


def downsample_half(plane: np.ndarray) -> np.ndarray:
    """Halve both dimensions by 2x2 block averaging; odd trailing row/column dropped."""
    plane = require_plane(plane, min_side=2)
    h2, w2 = plane.shape[0] // 2, plane.shape[1] // 2
    blocks = plane[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2)
    return blocks.mean(axis=(1, 3))
