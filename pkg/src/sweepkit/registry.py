"""Registry of augmentation functions.

Categories follow the four-way split of the augmentation library:

* ``C1`` affine transformation
* ``C2`` compression / quantization
* ``C3`` noise injection / channel distortion
* ``C4`` advanced transformation

Besides the category, each entry carries a ``group`` used to order steps
inside a policy: ``"geometric"`` steps run before ``"photometric"`` ones.

The registry holds the six defense transforms plus a small representative
set of simple functions; it does not try to cover the full 71-function
library. Add entries with :meth:`Registry.register`.

Every callable has the signature ``fn(img, rng, **params) -> img`` and is a
pure function of ``(img, params, rng state)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import augment as aug
from .errors import ConfigError, InvalidArgument
from .imgcore import as_image, median_filter, resize, round_half_up
from .rng import Rng

CATEGORIES = ("C1", "C2", "C3", "C4")
GROUPS = ("geometric", "photometric")

SHORTLIST_IDS = ("OD", "GCSM", "GESM", "DSSM", "RSPA", "SAT")


@dataclass(frozen=True)
class AugmentationFn:
    id: str
    category: str
    group: str
    func: Callable
    params: dict = field(default_factory=dict)
    stochastic: bool = False
    doc: str = ""
    # maps (h, w) to the output (h, w); None means size preserving
    out_size: Callable[[int, int], tuple[int, int]] | None = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise InvalidArgument(f"unknown category {self.category!r}")
        if self.group not in GROUPS:
            raise InvalidArgument(f"unknown group {self.group!r}")

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        return (h, w) if self.out_size is None else self.out_size(h, w)

    def bind(self, **overrides) -> dict:
        unknown = set(overrides) - set(self.params)
        if unknown:
            raise ConfigError(f"{self.id}: unknown parameters {sorted(unknown)}")
        return {**self.params, **overrides}

    def __call__(self, img, rng: Rng, **overrides) -> np.ndarray:
        return self.func(as_image(img), rng, **self.bind(**overrides))


class Registry:
    """Ordered, id-unique collection of :class:`AugmentationFn`."""

    def __init__(self, fns: Iterable[AugmentationFn] = ()):
        self._fns: dict[str, AugmentationFn] = {}
        for fn in fns:
            self.register(fn)

    def register(self, fn: AugmentationFn) -> None:
        if fn.id in self._fns:
            raise InvalidArgument(f"duplicate augmentation id {fn.id!r}")
        self._fns[fn.id] = fn

    def __getitem__(self, fn_id: str) -> AugmentationFn:
        try:
            return self._fns[fn_id]
        except KeyError:
            raise ConfigError(f"unknown augmentation id {fn_id!r}") from None

    def __contains__(self, fn_id) -> bool:
        return fn_id in self._fns

    def __iter__(self):
        return iter(self._fns.values())

    def __len__(self) -> int:
        return len(self._fns)

    def ids(self) -> list[str]:
        return list(self._fns)

    def position(self, fn_id: str) -> int:
        return self.ids().index(fn_id)

    def subset(self, ids: Iterable[str]) -> Registry:
        return Registry(self[i] for i in ids)


# ----------------------------------------------------------------------------
# adapters for the six defense transforms


def _od(img, rng, distortion_limit):
    return aug.optical_distortion(img, aug.OdParams(distortion_limit), rng)


def _gcsm(img, rng):
    return aug.gcsm(img)


def _gesm(img, rng):
    return aug.gesm(img)


def _dssm(img, rng):
    return aug.dssm(img)


def _rspa(img, rng, scale_limit):
    return aug.rspa(img, aug.RspaParams(scale_limit), rng)


def _sat(img, rng, translation_limit, scaling_limit, rotation_limit):
    return aug.sat(img, aug.SatParams(translation_limit, scaling_limit, rotation_limit), rng)


def _gamma(img, rng, gamma):
    return aug.gamma_transform(img, aug.GammaParams(gamma))


# ----------------------------------------------------------------------------
# representative simple functions


def _hflip(img, rng):
    return img[:, ::-1].copy()


def _vflip(img, rng):
    return img[::-1].copy()


def _transpose(img, rng):
    return np.ascontiguousarray(img.transpose(1, 0, 2))


def _rot90(img, rng):
    return np.ascontiguousarray(np.rot90(img, 1, axes=(0, 1)))


def _center_crop_resize(img, rng, scale):
    h, w, _ = img.shape
    ch, cw = max(1, int(h * scale)), max(1, int(w * scale))
    top, left = (h - ch) // 2, (w - cw) // 2
    return resize(img[top : top + ch, left : left + cw], h, w)


def _random_crop_resize(img, rng, min_scale):
    h, w, _ = img.shape
    scale = rng.uniform(min_scale, 1.0)
    ch, cw = max(1, int(h * scale)), max(1, int(w * scale))
    top = rng.integers(0, h - ch + 1)
    left = rng.integers(0, w - cw + 1)
    return resize(img[top : top + ch, left : left + cw], h, w)


def _grid_dropout(img, rng, cell, ratio):
    h, w, _ = img.shape
    hole = max(1, int(round(cell * ratio)))
    oy, ox = rng.integers(0, cell), rng.integers(0, cell)
    mask = np.zeros((h, w), dtype=bool)
    ys = (np.arange(h) + oy) % cell < hole
    xs = (np.arange(w) + ox) % cell < hole
    mask[np.ix_(ys, xs)] = True
    out = img.copy()
    out[mask] = 0
    return out


def _downscale(img, rng, scale):
    h, w, _ = img.shape
    small = resize(img, max(1, int(h * scale)), max(1, int(w * scale)), mode="nearest")
    return resize(small, h, w, mode="nearest")


def _posterize(img, rng, bits):
    keep = (0xFF << (8 - bits)) & 0xFF
    return img & np.uint8(keep)


def _median_blur(img, rng, kernel):
    return median_filter(img, kernel)


def _box_blur(img, rng, kernel):
    h, w, _ = img.shape
    r = kernel // 2
    padded = np.pad(img.astype(np.float64), ((r, r), (r, r), (0, 0)), mode="edge")
    acc = np.zeros(img.shape, dtype=np.float64)
    for dy in range(kernel):
        for dx in range(kernel):
            acc += padded[dy : dy + h, dx : dx + w]
    return round_half_up(acc / (kernel * kernel))


def _uniform_noise(img, rng, amplitude):
    noise = rng.uniform_array(-amplitude, amplitude, img.shape)
    return round_half_up(img + noise)


def _channel_shuffle(img, rng):
    order = rng.permutation(img.shape[2])
    return np.ascontiguousarray(img[:, :, order])


def _invert(img, rng):
    return 255 - img


def _brightness(img, rng, limit):
    return round_half_up(img + rng.uniform(-limit, limit))


def _contrast(img, rng, limit):
    factor = rng.uniform(1.0 - limit, 1.0 + limit)
    mean = img.mean()
    return round_half_up((img - mean) * factor + mean)


def _swap_hw(h, w):
    return (w, h)


def registry_default() -> Registry:
    """The six defense transforms followed by seventeen simple functions."""
    f = AugmentationFn
    return Registry(
        [
            f("OD", "C1", "geometric", _od, {"distortion_limit": 0.5}, True,
              "random centre-contraction remap by 1+delta_k, delta_k ~ U(-limit, 0)"),
            f("GCSM", "C3", "photometric", _gcsm, {}, False,
              "gamma 0.6 LUT, then 5x5 median; output stays in compressed space"),
            f("GESM", "C3", "photometric", _gesm, {}, False,
              "x1.53 clamp, gamma 2.6 LUT, 0.75x downscale, 5x5 median, resize back"),
            f("DSSM", "C2", "photometric", _dssm, {}, False,
              "0.8x downscale, 5x5 median, resize back"),
            f("RSPA", "C4", "geometric", _rspa, {"scale_limit": 1.3}, True,
              "shrink to random size, zero-pad at random offset, resize back (square input)"),
            f("SAT", "C4", "geometric", _sat,
              {"translation_limit": 0.16, "scaling_limit": 0.16, "rotation_limit": 4.0}, True,
              "random translation, rotation and scaling on a zero canvas"),
            f("HorizontalFlip", "C1", "geometric", _hflip, {}, False, "mirror columns"),
            f("VerticalFlip", "C1", "geometric", _vflip, {}, False, "mirror rows"),
            f("Transpose", "C1", "geometric", _transpose, {}, False, "swap rows and columns",
              out_size=_swap_hw),
            f("Rotate90", "C1", "geometric", _rot90, {}, False,
              "rotate 90 degrees counter-clockwise", out_size=_swap_hw),
            f("CenterCropResize", "C1", "geometric", _center_crop_resize, {"scale": 0.8}, False,
              "central crop of scale*size, bilinear resize back"),
            f("RandomCropResize", "C1", "geometric", _random_crop_resize, {"min_scale": 0.8}, True,
              "crop of random scale in [min_scale, 1] at a random offset, resize back"),
            f("GridDropout", "C1", "geometric", _grid_dropout, {"cell": 8, "ratio": 0.5}, True,
              "zero a regular grid of square holes with a random phase"),
            f("Downscale", "C2", "photometric", _downscale, {"scale": 0.5}, False,
              "nearest downscale by scale, nearest upscale back"),
            f("Posterize", "C2", "photometric", _posterize, {"bits": 4}, False,
              "keep the top `bits` bits of every pixel"),
            f("MedianBlur", "C3", "photometric", _median_blur, {"kernel": 3}, False,
              "plain median filter"),
            f("Blur", "C3", "photometric", _box_blur, {"kernel": 3}, False,
              "box filter with edge replication"),
            f("UniformNoise", "C3", "photometric", _uniform_noise, {"amplitude": 16.0}, True,
              "add independent U(-a, a) noise per value"),
            f("ChannelShuffle", "C3", "photometric", _channel_shuffle, {}, True,
              "random permutation of the channels"),
            f("InvertImg", "C3", "photometric", _invert, {}, False, "255 - v"),
            f("RandomBrightness", "C3", "photometric", _brightness, {"limit": 32.0}, True,
              "add one U(-limit, limit) offset to every value"),
            f("RandomContrast", "C3", "photometric", _contrast, {"limit": 0.2}, True,
              "scale deviations from the image mean by U(1-limit, 1+limit)"),
            f("Gamma", "C3", "photometric", _gamma, {"gamma": 1.0}, False,
              "gamma LUT round(255 * (v/255)**gamma)"),
        ]
    )


def canonical_order(ids: Iterable[str], registry: Registry) -> list[str]:
    """Geometric steps first, then photometric; ties by registry position."""
    ids = list(ids)
    return sorted(ids, key=lambda i: (GROUPS.index(registry[i].group), registry.position(i)))

