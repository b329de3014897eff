"""Backdoor triggers, label maps and data poisoning.

Three trigger families are supported:

* :class:`SolidSquare` - a coloured ``size x size`` block in the bottom-right
  corner (BadNets / Trojan square).
* :class:`Watermark` - a full-frame blend ``(1 - alpha) * img + alpha * mask``
  with a procedurally generated text-like mask (Trojan watermark).
* :class:`Perturbation` - a fixed signed offset pattern bounded in L0 or L2
  norm (invisible attacks).
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .data import LabeledDataset
from .errors import ConfigError, InvalidArgument
from .imgcore import as_image
from .rng import Rng, derive_seed

SEARCH = "search"
VALIDATION = "validation"


# ----------------------------------------------------------------------------
# triggers


@dataclass(frozen=True)
class SolidSquare:
    size: int = 5
    color: tuple[int, ...] = (255, 255, 255)

    def __post_init__(self):
        if self.size < 1:
            raise InvalidArgument("square size must be >= 1")
        if any(not 0 <= v <= 255 for v in self.color):
            raise InvalidArgument("square colour must lie in [0, 255]")

    def check(self, dims) -> None:
        h, w, c = dims
        if self.size > min(h, w):
            raise InvalidArgument(f"{self.size}px square does not fit a {h}x{w} image")
        if len(self.color) not in (1, c):
            raise InvalidArgument("square colour does not match the channel count")

    def apply(self, images: np.ndarray) -> np.ndarray:
        out = images.copy()
        out[..., -self.size :, -self.size :, :] = np.asarray(self.color, dtype=np.uint8)
        return out

    def to_json(self) -> dict:
        return {"kind": "square", "size": self.size, "color": list(self.color)}


def watermark_mask(dims, seed: int) -> np.ndarray:
    """Tiled rows of random 3x5 glyphs drawn in white on black."""
    h, w, c = dims
    rng = Rng(seed)
    glyphs = rng.random_array((8, 5, 3)) < 0.55
    mask = np.zeros((h, w), dtype=np.uint8)
    row_phase = rng.integers(0, 7)
    col_phase = rng.integers(0, 4)
    for gy in range(-1, h // 7 + 1):
        for gx in range(-1, w // 4 + 1):
            glyph = glyphs[rng.integers(0, len(glyphs))]
            y0 = gy * 7 + row_phase
            x0 = gx * 4 + col_phase + (gy % 2) * 2
            for dy in range(5):
                for dx in range(3):
                    y, x = y0 + dy, x0 + dx
                    if glyph[dy, dx] and 0 <= y < h and 0 <= x < w:
                        mask[y, x] = 255
    return np.repeat(mask[:, :, None], c, axis=2)


@dataclass(frozen=True)
class Watermark:
    mask: np.ndarray = field(repr=False)
    alpha: float = 0.2
    seed: int | None = None  # generator seed when the mask is procedural

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidArgument("watermark alpha must lie in (0, 1]")

    @classmethod
    def generate(cls, dims, seed: int, alpha: float = 0.2) -> Watermark:
        return cls(watermark_mask(dims, seed), alpha, seed)

    def check(self, dims) -> None:
        if tuple(self.mask.shape) != tuple(dims):
            raise InvalidArgument(f"watermark mask {self.mask.shape} does not match {dims}")

    def apply(self, images: np.ndarray) -> np.ndarray:
        blend = (1.0 - self.alpha) * images.astype(np.float64) + self.alpha * self.mask.astype(np.float64)
        return np.clip(np.floor(blend + 0.5), 0, 255).astype(np.uint8)

    def to_json(self) -> dict:
        doc = {"kind": "watermark", "alpha": self.alpha, "dims": list(self.mask.shape)}
        if self.seed is not None:
            doc["seed"] = self.seed
        else:
            doc["mask_b64"] = base64.b64encode(self.mask.tobytes()).decode("ascii")
        return doc


@dataclass(frozen=True)
class Perturbation:
    pattern: np.ndarray = field(repr=False)  # int16 offsets, image-shaped
    norm: str = "L2"
    budget: float = 1.0

    def __post_init__(self):
        if self.norm not in ("L0", "L2"):
            raise InvalidArgument(f"unknown norm {self.norm!r}")
        if not self.budget > 0:
            raise InvalidArgument("perturbation budget must be positive")
        if pattern_norm(self.pattern, self.norm) > self.budget + 1e-9:
            raise InvalidArgument(f"pattern exceeds its {self.norm} budget")

    def check(self, dims) -> None:
        if tuple(self.pattern.shape) != tuple(dims):
            raise InvalidArgument(f"pattern {self.pattern.shape} does not match {dims}")

    def apply(self, images: np.ndarray) -> np.ndarray:
        return np.clip(images.astype(np.int16) + self.pattern, 0, 255).astype(np.uint8)

    def to_json(self) -> dict:
        return {
            "kind": "perturbation",
            "norm": self.norm,
            "budget": self.budget,
            "dims": list(self.pattern.shape),
            "pattern_b64": base64.b64encode(self.pattern.astype("<i2").tobytes()).decode("ascii"),
        }


Trigger = Union[SolidSquare, Watermark, Perturbation]


def pattern_norm(pattern: np.ndarray, norm: str) -> float:
    """L0 counts pixel positions with any non-zero channel; L2 is the Euclidean norm."""
    if norm == "L0":
        return float(np.count_nonzero(np.any(pattern != 0, axis=-1)))
    return float(np.sqrt(np.sum(pattern.astype(np.float64) ** 2)))


def trigger_from_json(doc: dict) -> Trigger:
    kind = doc.get("kind")
    try:
        if kind == "square":
            return SolidSquare(int(doc["size"]), tuple(int(v) for v in doc["color"]))
        if kind == "watermark":
            dims = tuple(doc["dims"])
            if "seed" in doc:
                return Watermark.generate(dims, int(doc["seed"]), float(doc["alpha"]))
            mask = np.frombuffer(base64.b64decode(doc["mask_b64"]), dtype=np.uint8).reshape(dims)
            return Watermark(mask.copy(), float(doc["alpha"]))
        if kind == "perturbation":
            dims = tuple(doc["dims"])
            raw = base64.b64decode(doc["pattern_b64"])
            pattern = np.frombuffer(raw, dtype="<i2").reshape(dims).astype(np.int16)
            return Perturbation(pattern, doc["norm"], float(doc["budget"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"malformed trigger {doc!r}: {exc}") from None
    raise ConfigError(f"unknown trigger kind {kind!r}")


def apply_trigger(img, spec: Trigger) -> np.ndarray:
    img = as_image(img)
    spec.check(img.shape)
    return spec.apply(img[None])[0]


def apply_trigger_batch(images: np.ndarray, spec: Trigger) -> np.ndarray:
    spec.check(images.shape[1:])
    return spec.apply(images)


# ----------------------------------------------------------------------------
# perturbation triggers


def _project_l2(pattern: np.ndarray, budget: float) -> np.ndarray:
    norm = np.sqrt(np.sum(pattern**2))
    if norm > budget:
        pattern = pattern * (budget / norm)
    return pattern


def _project_l0(pattern: np.ndarray, budget: int, allowed: np.ndarray | None = None) -> np.ndarray:
    mag = np.max(np.abs(pattern), axis=-1)
    if allowed is not None:
        mag = np.where(allowed, mag, -1.0)
    keep = np.zeros(mag.size, dtype=bool)
    order = np.argsort(-mag.reshape(-1), kind="stable")[:budget]
    keep[order] = True
    keep &= mag.reshape(-1) > 0
    return pattern * keep.reshape(mag.shape)[..., None]


def _l0_region(dims) -> np.ndarray:
    h, w, _ = dims
    region = np.zeros((h, w), dtype=bool)
    rh, rw = max(2, h // 4), max(2, w // 4)
    region[-rh:, -rw:] = True
    return region


def _finalize(pattern: np.ndarray, norm: str, budget: float) -> np.ndarray:
    # truncation toward zero only shrinks magnitudes, so the budget still holds
    pattern = np.clip(pattern, -255, 255)
    out = np.trunc(pattern).astype(np.int16)
    if norm == "L2":
        assert pattern_norm(out, "L2") <= budget + 1e-9
    return out


def make_perturbation_trigger(
    norm: str,
    budget: float,
    dims,
    rng: Rng,
    model=None,
    clean: LabeledDataset | None = None,
    target: int = 0,
    steps: int = 40,
) -> Perturbation:
    """Norm-bounded perturbation trigger.

    Without ``model`` the pattern is random noise projected onto the norm
    ball; L0 patterns live in the bottom-right quarter. With ``model`` and a
    ``clean`` batch, the pattern is refined for ``steps`` iterations of
    normalised gradient descent on the model's loss toward ``target``,
    projecting after each step.
    """
    if norm not in ("L0", "L2"):
        raise InvalidArgument(f"unknown norm {norm!r}")
    if not budget > 0:
        raise InvalidArgument("perturbation budget must be positive")
    dims = tuple(dims)
    region = _l0_region(dims) if norm == "L0" else None
    k = int(budget)
    if norm == "L0":
        raw = rng.uniform_array(-255.0, 255.0, dims)
        pattern = _project_l0(raw * region[..., None], k, region)
    else:
        raw = rng.uniform_array(-1.0, 1.0, dims)
        pattern = raw * (budget / max(np.sqrt(np.sum(raw**2)), 1e-12))

    if model is not None:
        if clean is None or len(clean) == 0:
            raise InvalidArgument("gradient-based triggers need a clean batch")
        images = clean.images
        labels = np.full(len(images), target, dtype=np.int64)
        from .model import input_gradient

        lr = budget / 8.0 if norm == "L2" else 64.0
        for _ in range(steps):
            patched = np.clip(images.astype(np.float64) + pattern, 0, 255)
            grad = input_gradient(model, patched.astype(np.uint8), labels).mean(axis=0)
            if norm == "L2":
                pattern = _project_l2(pattern - lr * grad / max(np.linalg.norm(grad), 1e-12), budget)
            else:
                grad = grad / max(np.max(np.abs(grad)), 1e-12)
                pattern = np.clip(pattern - lr * grad * 4.0, -255, 255)
                pattern = _project_l0(pattern, k, region)
    return Perturbation(_finalize(pattern, norm, budget), norm, float(budget))


# ----------------------------------------------------------------------------
# label maps and attack instances


@dataclass(frozen=True)
class SingleTarget:
    target: int

    def map(self, labels: np.ndarray, num_classes: int) -> np.ndarray:
        if not 0 <= self.target < num_classes:
            raise InvalidArgument(f"target {self.target} outside {num_classes} classes")
        return np.full_like(np.asarray(labels), self.target)

    def to_json(self) -> dict:
        return {"mode": "single", "target": self.target}


@dataclass(frozen=True)
class AllToAll:
    shift: int = 1

    def map(self, labels: np.ndarray, num_classes: int) -> np.ndarray:
        return (np.asarray(labels) + self.shift) % num_classes

    def to_json(self) -> dict:
        return {"mode": "all-to-all", "shift": self.shift}


LabelMap = Union[SingleTarget, AllToAll]


def label_map_from_json(doc: dict) -> LabelMap:
    mode = doc.get("mode")
    if mode == "single":
        return SingleTarget(int(doc["target"]))
    if mode == "all-to-all":
        return AllToAll(int(doc.get("shift", 1)))
    raise ConfigError(f"unknown label-map mode {mode!r}")


@dataclass(frozen=True)
class AttackInstance:
    name: str
    trigger: Trigger
    labels: LabelMap
    poison_ratio: float
    role: str = SEARCH

    def __post_init__(self):
        if not 0.0 < self.poison_ratio < 1.0:
            raise InvalidArgument("poison_ratio must lie in (0, 1)")
        if self.role not in (SEARCH, VALIDATION):
            raise InvalidArgument(f"unknown role {self.role!r}")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "trigger": self.trigger.to_json(),
            "labels": self.labels.to_json(),
            "poison_ratio": self.poison_ratio,
            "role": self.role,
        }

    @classmethod
    def from_json(cls, doc: dict) -> AttackInstance:
        try:
            return cls(
                doc["name"],
                trigger_from_json(doc["trigger"]),
                label_map_from_json(doc["labels"]),
                float(doc["poison_ratio"]),
                doc.get("role", SEARCH),
            )
        except KeyError as exc:
            raise ConfigError(f"attack instance is missing {exc}") from None


def poison_dataset(ds: LabeledDataset, inst: AttackInstance, rng: Rng) -> tuple[LabeledDataset, np.ndarray]:
    """Patch ``floor(ratio * N)`` uniformly chosen samples and relabel them."""
    n = len(ds)
    count = int(math.floor(inst.poison_ratio * n))
    if count < 1:
        raise InvalidArgument(f"poison ratio {inst.poison_ratio} selects no samples out of {n}")
    inst.trigger.check(ds.dims)
    idx = np.sort(rng.permutation(n)[:count])
    images = ds.images.copy()
    labels = ds.labels.copy()
    images[idx] = inst.trigger.apply(ds.images[idx])
    labels[idx] = inst.labels.map(ds.labels[idx], ds.num_classes)
    return LabeledDataset(images, labels, ds.num_classes), idx


def triggered_eval_set(clean: LabeledDataset, inst: AttackInstance) -> tuple[np.ndarray, np.ndarray]:
    """Trigger-patched copies of ``clean`` and the labels the attacker wants.

    Samples already in the target class are dropped for single-target attacks.
    """
    keep = np.ones(len(clean), dtype=bool)
    if isinstance(inst.labels, SingleTarget):
        keep = clean.labels != inst.labels.target
    if not keep.any():
        raise InvalidArgument("no evaluation samples remain after excluding the target class")
    images = apply_trigger_batch(clean.images[keep], inst.trigger)
    wanted = inst.labels.map(clean.labels[keep], clean.num_classes)
    return images, wanted


def attack_db_default(dims=(32, 32, 3), num_classes: int = 10, seed: int = 0) -> list[AttackInstance]:
    """Eight desk-scale instances mirroring the attack table, in its order."""
    if num_classes < 2:
        raise InvalidArgument("need at least two classes")
    h, w, c = dims
    k = num_classes
    square = min(5, h, w)
    white = (255,) * c

    def color(*rgb):
        return tuple(rgb) if c == 3 else (int(round(sum(rgb) / 3)),)

    l2_budget = 8.0 * math.sqrt(h * w * c)
    l0_budget = float(min(24, max(1, (h // 4) * (w // 4))))
    l2 = make_perturbation_trigger("L2", l2_budget, dims, Rng(derive_seed(seed, "attack.l2")))
    l0 = make_perturbation_trigger("L0", l0_budget, dims, Rng(derive_seed(seed, "attack.l0")))
    return [
        AttackInstance("trojan-wm", Watermark.generate(dims, derive_seed(seed, "attack.wm", 0)),
                       SingleTarget(0), 0.10, SEARCH),
        AttackInstance("trojan-sq", SolidSquare(min(4, h, w), color(255, 0, 255)),
                       SingleTarget(7 % k), 0.10, VALIDATION),
        AttackInstance("trojan-sq-b", SolidSquare(min(6, h, w), color(0, 255, 255)),
                       SingleTarget(0), 0.10, VALIDATION),
        AttackInstance("badnets-all2all", SolidSquare(square, white), AllToAll(1), 0.10, VALIDATION),
        AttackInstance("badnets", SolidSquare(square, white), SingleTarget(33 % k), 0.10, VALIDATION),
        AttackInstance("l2-invisible", l2, SingleTarget(3 % k), 0.05, SEARCH),
        AttackInstance("l0-invisible", l0, SingleTarget(4 % k), 0.05, SEARCH),
        AttackInstance("trojan-wm-b", Watermark.generate(dims, derive_seed(seed, "attack.wm", 1)),
                       SingleTarget(7 % k), 0.10, VALIDATION),
    ]
