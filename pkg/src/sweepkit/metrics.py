"""Clean accuracy and attack success rate, with optional inference preprocessing.

When a policy is given, sample ``i`` is transformed with its own generator
seeded by ``derive_seed(seed, tag, i)``. The result therefore does not depend
on evaluation order or on how work is split between threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .attacks import AttackInstance, triggered_eval_set
from .data import LabeledDataset
from .errors import InvalidArgument
from .policy import Policy, apply_policy
from .registry import Registry
from .rng import Rng, derive_seed

DEFAULT_EVAL_SAMPLES = 200

CLEAN_TAG = "eval.clean"
TRIGGERED_TAG = "eval.triggered"


def worker_count() -> int:
    """Thread cap from ``SWEEPKIT_THREADS`` (default 1)."""
    raw = os.environ.get("SWEEPKIT_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidArgument(f"SWEEPKIT_THREADS must be an integer, got {raw!r}") from None


def parallel_map(fn, items) -> list:
    """``list(map(fn, items))``, spread over ``worker_count()`` threads."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def transform_images(images: np.ndarray, policy: Policy | None, seed: int, tag: str,
                     registry: Registry | None = None) -> np.ndarray:
    """Apply ``policy`` to every image with per-sample seeds; ``None`` copies."""
    images = np.asarray(images)
    if policy is None:
        return images.copy()
    if len(images) == 0:
        return images.copy()

    def one(i):
        return apply_policy(policy, images[i], Rng(derive_seed(seed, tag, i)), registry)

    return np.stack(parallel_map(one, range(len(images))))


def eval_subset(ds: LabeledDataset, n: int | None, seed: int, tag: str = "eval.subset") -> LabeledDataset:
    """Seeded subsample of ``n`` samples (all of them when ``n`` is None or too big)."""
    if n is None or n >= len(ds):
        return ds
    if n < 1:
        raise InvalidArgument("evaluation subset must hold at least one sample")
    idx = np.sort(Rng(derive_seed(seed, tag)).permutation(len(ds))[:n])
    return ds.subset(idx)


@dataclass(frozen=True)
class EvalReport:
    n_clean: int
    n_correct: int
    n_triggered: int
    n_success: int
    confusion: np.ndarray  # (K, K) clean counts, rows = true label

    @property
    def acc(self) -> float:
        return self.n_correct / self.n_clean

    @property
    def asr(self) -> float | None:
        return self.n_success / self.n_triggered if self.n_triggered else None

    def to_json(self) -> dict:
        return {
            "acc": self.acc,
            "asr": self.asr,
            "n_clean": self.n_clean,
            "n_correct": self.n_correct,
            "n_triggered": self.n_triggered,
            "n_success": self.n_success,
            "confusion": self.confusion.tolist(),
        }


def _predict(model, images) -> np.ndarray:
    return np.asarray(model.predict_batch(images), dtype=np.int64)


def clean_predictions(model, ds: LabeledDataset, preprocess: Policy | None = None, seed: int = 0,
                      registry: Registry | None = None) -> np.ndarray:
    if len(ds) == 0:
        raise InvalidArgument("cannot evaluate on an empty dataset")
    return _predict(model, transform_images(ds.images, preprocess, seed, CLEAN_TAG, registry))


def accuracy(model, ds: LabeledDataset, preprocess: Policy | None = None, seed: int = 0,
             registry: Registry | None = None) -> float:
    """Fraction of samples whose (preprocessed) prediction is the true label."""
    pred = clean_predictions(model, ds, preprocess, seed, registry)
    return int(np.sum(pred == ds.labels)) / len(ds)


def _triggered_counts(model, clean_ds, inst, preprocess, seed, registry) -> tuple[int, int]:
    if len(clean_ds) == 0:
        raise InvalidArgument("cannot evaluate on an empty dataset")
    images, wanted = triggered_eval_set(clean_ds, inst)
    pred = _predict(model, transform_images(images, preprocess, seed, TRIGGERED_TAG, registry))
    return int(np.sum(pred == wanted)), len(wanted)


def attack_success_rate(model, clean_ds: LabeledDataset, inst: AttackInstance,
                        preprocess: Policy | None = None, seed: int = 0,
                        registry: Registry | None = None) -> float:
    """Fraction of trigger-patched samples predicted as the attacker's label.

    Single-target attacks skip samples whose true label already is the target.
    """
    hits, n = _triggered_counts(model, clean_ds, inst, preprocess, seed, registry)
    return hits / n


def evaluate(model, clean_ds: LabeledDataset, inst: AttackInstance | None = None,
             preprocess: Policy | None = None, seed: int = 0,
             registry: Registry | None = None) -> EvalReport:
    pred = clean_predictions(model, clean_ds, preprocess, seed, registry)
    k = clean_ds.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (clean_ds.labels, pred), 1)
    hits = n_trig = 0
    if inst is not None:
        hits, n_trig = _triggered_counts(model, clean_ds, inst, preprocess, seed, registry)
    return EvalReport(len(clean_ds), int(np.trace(confusion)), n_trig, hits, confusion)
