"""The six defense transforms and the gamma look-up table.

Stochastic transforms take an :class:`~sweepkit.rng.Rng` and also accept
keyword overrides for each random draw (``delta_k=``, ``length=``, ...).
The overrides exist so tests can pin the randomness; the draws still happen
in the documented order when a value is forced, so streams never shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .imgcore import (
    apply_lut,
    as_image,
    center_crop,
    gather,
    median_filter,
    pad_zero,
    remap,
    resize,
    round_half_up,
)
from .rng import Rng

GCSM_GAMMA = 0.6
GESM_GAMMA = 2.6
GESM_GAIN = 1.53
GESM_SCALE = 0.75
DSSM_SCALE = 0.8
MEDIAN_KERNEL = 5


@dataclass(frozen=True)
class OdParams:
    distortion_limit: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.distortion_limit <= 1.0:
            raise InvalidArgument("distortion_limit must lie in (0, 1]")


@dataclass(frozen=True)
class GammaParams:
    gamma: float = GCSM_GAMMA

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise InvalidArgument("gamma must be positive")


@dataclass(frozen=True)
class RspaParams:
    scale_limit: float = 1.3

    def __post_init__(self):
        if not self.scale_limit >= 1.0:
            raise InvalidArgument("scale_limit must be >= 1")


@dataclass(frozen=True)
class SatParams:
    translation_limit: float = 0.16
    scaling_limit: float = 0.16
    rotation_limit: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.translation_limit < 1.0:
            raise InvalidArgument("translation_limit must lie in [0, 1)")
        if not 0.0 <= self.scaling_limit < 1.0:
            raise InvalidArgument("scaling_limit must lie in [0, 1)")
        if not self.rotation_limit >= 0.0:
            raise InvalidArgument("rotation_limit must be >= 0")


def _scaled(n: int, factor: float) -> int:
    return max(1, int(math.floor(n * factor)))


# ----------------------------------------------------------------------------
# T1: optical distortion


def od_maps(h: int, w: int, delta_k: float) -> tuple[np.ndarray, np.ndarray]:
    """Centre-contraction maps: ``(u - c) * (1 + delta_k) + c`` on each axis."""
    cx, cy = w // 2, h // 2
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    map_x = np.broadcast_to((u - cx) * (1.0 + delta_k) + cx, (h, w))
    map_y = np.broadcast_to(((v - cy) * (1.0 + delta_k) + cy)[:, None], (h, w))
    return map_x, map_y


def optical_distortion(img, params: OdParams = OdParams(), rng: Rng | None = None, *, delta_k=None):
    img = as_image(img)
    drawn = rng.uniform(-params.distortion_limit, 0.0) if rng is not None else None
    if delta_k is None:
        if drawn is None:
            raise InvalidArgument("optical_distortion needs an rng or a forced delta_k")
        delta_k = drawn
    map_x, map_y = od_maps(img.shape[0], img.shape[1], delta_k)
    return remap(img, map_x, map_y)


# ----------------------------------------------------------------------------
# gamma LUT and the three median filters


def gamma_lut(gamma: float) -> np.ndarray:
    if not gamma > 0.0:
        raise InvalidArgument("gamma must be positive")
    levels = np.arange(256, dtype=np.float64)
    return round_half_up(np.power(levels / 255.0, gamma) * 255.0)


def gamma_transform(img, params: GammaParams = GammaParams()) -> np.ndarray:
    return apply_lut(img, gamma_lut(params.gamma))


def gcsm(img) -> np.ndarray:
    """Median filter in gamma-compressed space; the output stays compressed."""
    compressed = apply_lut(img, gamma_lut(GCSM_GAMMA))
    return median_filter(compressed, MEDIAN_KERNEL)


def gesm(img) -> np.ndarray:
    img = as_image(img)
    h, w, _ = img.shape
    lit = round_half_up(img.astype(np.float64) * GESM_GAIN)
    extended = apply_lut(lit, gamma_lut(GESM_GAMMA))
    small = resize(extended, _scaled(h, GESM_SCALE), _scaled(w, GESM_SCALE))
    return resize(median_filter(small, MEDIAN_KERNEL), h, w)


def dssm(img) -> np.ndarray:
    img = as_image(img)
    h, w, _ = img.shape
    small = resize(img, _scaled(h, DSSM_SCALE), _scaled(w, DSSM_SCALE))
    return resize(median_filter(small, MEDIAN_KERNEL), h, w)


# ----------------------------------------------------------------------------
# T5: random sized padding


def rspa(img, params: RspaParams = RspaParams(), rng: Rng | None = None, *, length=None, x1=None, y1=None):
    """Shrink a square image to a random size, zero-pad at a random offset, resize back.

    Padding offsets ``x1``/``x2`` are columns (left/right), ``y1``/``y2`` rows
    (top/bottom).
    """
    img = as_image(img)
    h, w, _ = img.shape
    if h != w:
        raise InvalidArgument(f"rspa needs a square image, got {h}x{w}")
    size = h
    len_max = int(math.floor(size * params.scale_limit))

    def draw(lo, hi):
        return None if rng is None else int(math.floor(rng.uniform(lo, hi)))

    d_len = draw(size, len_max)
    length = d_len if length is None else int(length)
    rem = len_max - length if length is not None else None
    d_x1 = draw(0, rem) if rem is not None else None
    d_y1 = draw(0, rem) if rem is not None else None
    x1 = d_x1 if x1 is None else int(x1)
    y1 = d_y1 if y1 is None else int(y1)
    if length is None or x1 is None or y1 is None:
        raise InvalidArgument("rspa needs an rng or forced length/x1/y1")
    if not (1 <= length <= len_max and 0 <= x1 <= rem and 0 <= y1 <= rem):
        raise InvalidArgument("forced rspa parameters out of range")
    shrunk = resize(img, length, length)
    canvas = pad_zero(shrunk, x1, rem - x1, y1, rem - y1)
    return resize(canvas, size, size)


# ----------------------------------------------------------------------------
# T6: stochastic affine transform


def sat_translate(img, dx: float, dy: float) -> np.ndarray:
    """``out(x, y) = img(x + dx*w, y + dy*h)`` for in-bounds sources, else 0."""
    h, w, _ = img.shape
    rows = np.floor(np.arange(h, dtype=np.float64) + dy * h).astype(np.int64)
    cols = np.floor(np.arange(w, dtype=np.float64) + dx * w).astype(np.int64)
    return gather(img, np.broadcast_to(rows[:, None], (h, w)), np.broadcast_to(cols, (h, w)))


def sat_rotate(img, degrees: float) -> np.ndarray:
    """Inverse-map each destination pixel through a rotation about ``(w//2, h//2)``."""
    h, w, _ = img.shape
    theta = degrees * math.pi / 180.0
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cx, cy = w // 2, h // 2
    xs = np.arange(w, dtype=np.float64)[None, :] - cx
    ys = np.arange(h, dtype=np.float64)[:, None] - cy
    src_x = np.floor(xs * cos_t + ys * sin_t + cx).astype(np.int64)
    src_y = np.floor(-xs * sin_t + ys * cos_t + cy).astype(np.int64)
    return gather(img, src_y, src_x)


def sat_scale(img, factor: float) -> np.ndarray:
    h, w, _ = img.shape
    nh, nw = _scaled(h, factor), _scaled(w, factor)
    out = resize(img, nh, nw)
    if nh > h or nw > w:
        out = center_crop(out, min(nh, h), min(nw, w))
        nh, nw = out.shape[:2]
    if nh < h or nw < w:
        top, left = (h - nh) // 2, (w - nw) // 2
        out = pad_zero(out, left, w - nw - left, top, h - nh - top)
    return out


def sat(img, params: SatParams = SatParams(), rng: Rng | None = None, *, dx=None, dy=None, dr=None, ds=None):
    img = as_image(img)
    t, s, r = params.translation_limit, params.scaling_limit, params.rotation_limit
    drawn = [None] * 4
    if rng is not None:
        drawn = [rng.uniform(-t, t), rng.uniform(-t, t), rng.uniform(-r, r), rng.uniform(1.0 - s, 1.0 + s)]
    forced = [dx, dy, dr, ds]
    dx, dy, dr, ds = (f if f is not None else d for f, d in zip(forced, drawn))
    if None in (dx, dy, dr, ds):
        raise InvalidArgument("sat needs an rng or all of dx/dy/dr/ds forced")
    out = sat_translate(img, dx, dy)
    out = sat_rotate(out, dr)
    return sat_scale(out, ds)
