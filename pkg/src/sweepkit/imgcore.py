"""Deterministic image primitives shared by every transform.

Images are ``(H, W, C)`` uint8 numpy arrays with C in {1, 3}. Functions never
modify their input. Any real-valued pixel result is rounded half-up and then
clamped to [0, 255].
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import InvalidArgument

__all__ = [
    "as_image",
    "round_half_up",
    "resize",
    "pad_zero",
    "center_crop",
    "remap",
    "apply_lut",
    "identity_lut",
    "median_filter",
]


def as_image(img) -> np.ndarray:
    """Validate and normalise an image to a contiguous ``(H, W, C)`` uint8 array.

    2-D input is treated as single-channel.
    """
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise InvalidArgument(f"image must be HxWxC, got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1:
        raise InvalidArgument(f"image dimensions must be positive, got {h}x{w}")
    if c not in (1, 3):
        raise InvalidArgument(f"image must have 1 or 3 channels, got {c}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer) or arr.min() < 0 or arr.max() > 255:
            raise InvalidArgument("pixel values must be integers in [0, 255]")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr)


def round_half_up(values) -> np.ndarray:
    """Round half-up and clamp to the uint8 range."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def _bilinear_axis(old: int, new: int):
    # half-pixel centres: src = (dst + 0.5) * (old / new) - 0.5
    scale = old / new
    src = (np.arange(new, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, old - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, old - 1)
    return i0, i1, src - i0


def _nearest_axis(old: int, new: int) -> np.ndarray:
    scale = old / new
    src = np.floor((np.arange(new, dtype=np.float64) + 0.5) * scale)
    return np.clip(src, 0, old - 1).astype(np.int64)


def resize(img, new_h: int, new_w: int, mode: str = "bilinear") -> np.ndarray:
    img = as_image(img)
    new_h, new_w = int(new_h), int(new_w)
    if new_h < 1 or new_w < 1:
        raise InvalidArgument(f"resize target must be positive, got {new_h}x{new_w}")
    h, w, _ = img.shape
    if (new_h, new_w) == (h, w):
        return img.copy()
    if mode == "bilinear":
        y0, y1, wy = _bilinear_axis(h, new_h)
        x0, x1, wx = _bilinear_axis(w, new_w)
        return _kernels.bilinear(img, y0, y1, wy, x0, x1, wx)
    if mode == "nearest":
        rows = _nearest_axis(h, new_h)
        cols = _nearest_axis(w, new_w)
        return np.ascontiguousarray(img[rows][:, cols])
    raise InvalidArgument(f"unknown resize mode {mode!r}")


def pad_zero(img, left: int, right: int, top: int, bottom: int) -> np.ndarray:
    img = as_image(img)
    if min(left, right, top, bottom) < 0:
        raise InvalidArgument("padding margins must be non-negative")
    h, w, c = img.shape
    out = np.zeros((h + top + bottom, w + left + right, c), dtype=np.uint8)
    out[top : top + h, left : left + w] = img
    return out


def center_crop(img, out_h: int, out_w: int) -> np.ndarray:
    img = as_image(img)
    h, w, _ = img.shape
    if not (1 <= out_h <= h and 1 <= out_w <= w):
        raise InvalidArgument(f"cannot crop {h}x{w} to {out_h}x{out_w}")
    top = (h - out_h) // 2
    left = (w - out_w) // 2
    return img[top : top + out_h, left : left + out_w].copy()


def gather(img, src_rows: np.ndarray, src_cols: np.ndarray) -> np.ndarray:
    """``out[i, j] = img[src_rows[i, j], src_cols[i, j]]``, zero where out of bounds."""
    img = as_image(img)
    return _kernels.gather(
        img,
        np.ascontiguousarray(src_rows, dtype=np.int64),
        np.ascontiguousarray(src_cols, dtype=np.int64),
    )


def remap(img, map_x: np.ndarray, map_y: np.ndarray) -> np.ndarray:
    """Sample ``img`` at ``(floor(map_y), floor(map_x))`` per output pixel.

    ``map_x`` holds source columns and ``map_y`` source rows, both shaped
    ``(H, W)`` like the image. Sources outside the image give 0.
    """
    img = as_image(img)
    map_x = np.asarray(map_x, dtype=np.float64)
    map_y = np.asarray(map_y, dtype=np.float64)
    if map_x.shape != img.shape[:2] or map_y.shape != img.shape[:2]:
        raise InvalidArgument(
            f"map shapes {map_x.shape}/{map_y.shape} do not match image {img.shape[:2]}"
        )
    return gather(img, np.floor(map_y).astype(np.int64), np.floor(map_x).astype(np.int64))


def identity_lut() -> np.ndarray:
    return np.arange(256, dtype=np.uint8)


def apply_lut(img, lut) -> np.ndarray:
    img = as_image(img)
    lut = np.asarray(lut)
    if lut.shape != (256,):
        raise InvalidArgument(f"LUT must have 256 entries, got shape {lut.shape}")
    if lut.dtype != np.uint8:
        if lut.min() < 0 or lut.max() > 255:
            raise InvalidArgument("LUT entries must lie in [0, 255]")
        lut = lut.astype(np.uint8)
    return lut[img]


def median_filter(img, kernel: int = 5) -> np.ndarray:
    """Per-channel median over a ``kernel x kernel`` window with reflect-101 borders.

    The median of the k*k window is the element at index ``k*k // 2`` of the
    sorted neighbourhood.
    """
    img = as_image(img)
    kernel = int(kernel)
    if kernel < 1 or kernel % 2 == 0:
        raise InvalidArgument(f"median kernel must be odd and >= 1, got {kernel}")
    if kernel == 1:
        return img.copy()
    return _kernels.median(img, kernel)
