"""Policy search: shortlist, fine-tuning policy, inference policy, validation.

The search never looks at images directly. It asks a *backend* three things:

* ``acc(model, item, policy)``  clean accuracy of ``model`` on ``item``
* ``asr(model, item, policy)``  attack success rate of ``model`` on ``item``
* ``finetune(model, item, policy)``  a fine-tuned copy of ``model``

``policy`` is ``None`` for "no preprocessing". :class:`ImageBackend` does the
real work on images; tests drive the same code with lookup-table backends.

Rates are exact ratios of sample counts, so averages and the two strict
threshold tests are done on :class:`fractions.Fraction` values recovered from
the floats. That keeps e.g. ``0.50 - 0.49 > 0.01`` false, as it should be.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Protocol, Sequence

from . import metrics
from .attacks import AttackInstance
from .data import LabeledDataset
from .errors import ConfigError, InvalidArgument
from .model import TrainConfig, fine_tune
from .policy import Policy
from .registry import Registry, canonical_order
from .rng import derive_seed
from .tables import fmt_rate, render_table

log = logging.getLogger(__name__)

SWEEP_SCHEMA = "sweepkit.sweep/1"
MAX_DENOMINATOR = 10**6


def exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    return Fraction(x).limit_denominator(MAX_DENOMINATOR)


def mean(values) -> Fraction:
    values = [exact(v) for v in values]
    return sum(values, Fraction(0)) / len(values)


@dataclass(frozen=True)
class SweepConfig:
    eps_acc: float = 0.7
    eps_asr: float = 0.01
    n: int = 6
    eval_samples: int = metrics.DEFAULT_EVAL_SAMPLES
    finetune_samples: int | None = None  # None: min(10000, 80% of the clean pool)
    finetune_epochs: int = 5
    seed: int = 0
    candidates: tuple[str, ...] | None = None  # None: every registry function

    def __post_init__(self):
        if not 0.0 < self.eps_acc < 1.0:
            raise ConfigError("eps_acc must lie in (0, 1)")
        if not 0.0 < self.eps_asr < 1.0:
            raise ConfigError("eps_asr must lie in (0, 1)")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.eval_samples < 1:
            raise ConfigError("eval_samples must be positive")
        if self.finetune_samples is not None and self.finetune_samples < 1:
            raise ConfigError("finetune_samples must be positive")
        if self.finetune_epochs < 1:
            raise ConfigError("finetune_epochs must be positive")
        if self.candidates is not None:
            object.__setattr__(self, "candidates", tuple(self.candidates))

    def finetune_count(self, available: int) -> int:
        if self.finetune_samples is not None:
            return min(self.finetune_samples, available)
        return max(1, min(10000, (available * 4) // 5))

    def to_json(self) -> dict:
        doc = {
            "eps_acc": self.eps_acc,
            "eps_asr": self.eps_asr,
            "n": self.n,
            "eval_samples": self.eval_samples,
            "finetune_samples": self.finetune_samples,
            "finetune_epochs": self.finetune_epochs,
            "seed": self.seed,
        }
        doc["candidates"] = None if self.candidates is None else list(self.candidates)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> SweepConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown sweep settings {sorted(unknown)}")
        return cls(**doc)


@dataclass
class SearchItem:
    """One attack as seen by the search: its infected model and its data."""

    name: str
    model: Any
    inst: AttackInstance | None = None
    eval_clean: LabeledDataset | None = None
    finetune_clean: LabeledDataset | None = None


class Backend(Protocol):
    def acc(self, model, item: SearchItem, policy: Policy | None) -> float: ...

    def asr(self, model, item: SearchItem, policy: Policy | None) -> float: ...

    def finetune(self, model, item: SearchItem, policy: Policy) -> Any: ...


class ImageBackend:
    """Evaluates and fine-tunes real :class:`~sweepkit.model.TinyClassifier` models."""

    def __init__(self, cfg: SweepConfig, train_cfg: TrainConfig = TrainConfig(),
                 registry: Registry | None = None):
        self.cfg = cfg
        self.train_cfg = train_cfg
        self.registry = registry
        self.eval_seed = derive_seed(cfg.seed, "sweep.eval")

    def acc(self, model, item, policy):
        return metrics.accuracy(model, item.eval_clean, policy, self.eval_seed, self.registry)

    def asr(self, model, item, policy):
        return metrics.attack_success_rate(model, item.eval_clean, item.inst, policy,
                                           self.eval_seed, self.registry)

    def finetune(self, model, item, policy):
        pool = item.finetune_clean
        seed = derive_seed(self.cfg.seed, "sweep.finetune." + item.name)
        images = metrics.transform_images(pool.images, policy, seed, "finetune.transform", self.registry)
        ds = LabeledDataset(images, pool.labels, pool.num_classes)
        cfg = replace(self.train_cfg, seed=seed)
        return fine_tune(model, ds, self.cfg.finetune_epochs, cfg)


# ----------------------------------------------------------------------------
# step 1: shortlist


@dataclass(frozen=True)
class ShortlistEntry:
    fn_id: str
    acc: tuple[float, ...]  # per search attack, in search-set order
    asr: tuple[float, ...]
    avg_asr: float
    kept: bool

    def to_json(self, names: Sequence[str]) -> dict:
        return {
            "id": self.fn_id,
            "acc": dict(zip(names, self.acc)),
            "asr": dict(zip(names, self.asr)),
            "avg_asr": self.avg_asr,
            "kept": self.kept,
        }


def score_functions(registry: Registry, items: Sequence[SearchItem], backend: Backend,
                    cfg: SweepConfig) -> list[ShortlistEntry]:
    """Per-function ACC/ASR on the original infected models, in registry order."""
    if not items:
        raise InvalidArgument("the search set is empty")
    ids = registry.ids() if cfg.candidates is None else list(cfg.candidates)
    for fn_id in ids:
        registry[fn_id]
    eps = exact(cfg.eps_acc)

    def score(fn_id):
        policy = Policy.of(fn_id)
        acc = tuple(float(backend.acc(it.model, it, policy)) for it in items)
        asr = tuple(float(backend.asr(it.model, it, policy)) for it in items)
        kept = all(exact(a) > eps for a in acc)
        return ShortlistEntry(fn_id, acc, asr, float(mean(asr)), kept)

    return metrics.parallel_map(score, ids)


def rank_shortlist(entries: Sequence[ShortlistEntry], registry: Registry) -> list[ShortlistEntry]:
    """Kept entries by ascending average ASR, ties by registry position."""
    kept = [e for e in entries if e.kept]
    return sorted(kept, key=lambda e: (mean(e.asr), registry.position(e.fn_id)))


def shortlist(registry: Registry, items: Sequence[SearchItem], backend: Backend,
              cfg: SweepConfig) -> list[ShortlistEntry]:
    return rank_shortlist(score_functions(registry, items, backend, cfg), registry)


# ----------------------------------------------------------------------------
# step 2: fine-tuning policy


def build_pf(entries: Sequence[ShortlistEntry], n: int, registry: Registry) -> Policy:
    """Top ``n`` shortlisted functions in canonical order.

    With fewer than ``n`` entries every entry is used and a warning is logged.
    """
    if n < 1:
        raise InvalidArgument("n must be at least 1")
    if not entries:
        raise InvalidArgument("no augmentation function passed the accuracy threshold")
    if len(entries) < n:
        log.warning("shortlist holds %d functions, fewer than n=%d; using all of them", len(entries), n)
    top = [e.fn_id for e in entries[:n]]
    return Policy.of(*canonical_order(top, registry))


def finetune_per_attack(items: Sequence[SearchItem], pf: Policy, backend: Backend) -> list:
    if not pf:
        raise InvalidArgument("the fine-tuning policy is empty")
    return metrics.parallel_map(lambda it: backend.finetune(it.model, it, pf), items)


# ----------------------------------------------------------------------------
# step 3: inference policy


@dataclass(frozen=True)
class Candidate:
    ids: tuple[str, ...]
    asr: tuple[float, ...]
    avg_asr: float
    qualified: bool

    def to_json(self) -> dict:
        return {"ids": list(self.ids), "asr": list(self.asr), "avg_asr": self.avg_asr,
                "qualified": self.qualified}


@dataclass(frozen=True)
class PiSelection:
    avg_base: float
    candidates: tuple[Candidate, ...]
    pi: Policy
    fallback: bool


def subsets(policy: Policy) -> list[Policy]:
    """All non-empty subsets, by size then lexicographic step index; steps keep their order."""
    steps = policy.steps
    out = []
    for size in range(1, len(steps) + 1):
        for combo in itertools.combinations(range(len(steps)), size):
            out.append(Policy(tuple(steps[i] for i in combo)))
    return out


def select_pi(pf: Policy, tuned: Sequence, items: Sequence[SearchItem], backend: Backend,
              cfg: SweepConfig) -> PiSelection:
    """Lowest-ASR subset of ``pf`` beating the ``pf`` baseline by more than ``eps_asr``.

    Equal averages keep the earlier subset in :func:`subsets` order. When no
    subset qualifies, ``pf`` itself is returned with ``fallback`` set.
    """
    if len(tuned) != len(items):
        raise InvalidArgument("need one fine-tuned model per search attack")
    base = mean(backend.asr(m, it, pf) for m, it in zip(tuned, items))
    eps = exact(cfg.eps_asr)

    def score(policy):
        asr = tuple(float(backend.asr(m, it, policy)) for m, it in zip(tuned, items))
        avg = mean(asr)
        return Candidate(tuple(policy.ids), asr, float(avg), base - avg > eps), avg

    scored = metrics.parallel_map(score, subsets(pf))
    best = None
    for (cand, avg), policy in zip(scored, subsets(pf)):
        if cand.qualified and (best is None or avg < best[0]):
            best = (avg, policy)
    cands = tuple(c for c, _ in scored)
    if best is None:
        log.warning("no subset of the fine-tuning policy beats its baseline; using it for inference")
        return PiSelection(float(base), cands, pf, True)
    return PiSelection(float(base), cands, best[1], False)


# ----------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class DefenseRow:
    """Baseline, fine-tune + P_i inference and fine-tune + P_f inference for one attack."""

    name: str
    baseline_acc: float
    baseline_asr: float
    pi_acc: float
    pi_asr: float
    pf_acc: float
    pf_asr: float

    def to_json(self) -> dict:
        return {
            "attack": self.name,
            "baseline": {"acc": self.baseline_acc, "asr": self.baseline_asr},
            "pf_finetune_pi_inference": {"acc": self.pi_acc, "asr": self.pi_asr},
            "pf_finetune_pf_inference": {"acc": self.pf_acc, "asr": self.pf_asr},
        }


def defense_rows(pf: Policy, pi: Policy, items: Sequence[SearchItem], backend: Backend,
                 tuned: Sequence | None = None) -> list[DefenseRow]:
    if not pf or not pi:
        raise InvalidArgument("policies must be non-empty")
    if tuned is None:
        tuned = finetune_per_attack(items, pf, backend) if items else []
    rows = []
    for it, m in zip(items, tuned):
        rows.append(DefenseRow(
            it.name,
            float(backend.acc(it.model, it, None)), float(backend.asr(it.model, it, None)),
            float(backend.acc(m, it, pi)), float(backend.asr(m, it, pi)),
            float(backend.acc(m, it, pf)), float(backend.asr(m, it, pf)),
        ))
    return rows


def validate(pf: Policy, pi: Policy, items: Sequence[SearchItem], backend: Backend) -> list[DefenseRow]:
    """Fine-tune each unseen attack's model with ``pf`` and measure it under ``pi`` and ``pf``."""
    return defense_rows(pf, pi, items, backend)


# ----------------------------------------------------------------------------
# whole search


@dataclass
class SweepResult:
    config: SweepConfig
    search_names: list[str]
    baseline: list[tuple[float, float]]  # (acc, asr) per search attack, no preprocessing
    scores: list[ShortlistEntry]
    shortlist: list[ShortlistEntry]
    pf: Policy
    pf_deficient: bool
    tuned: list = field(repr=False)
    selection: PiSelection
    search_rows: list[DefenseRow]
    validation_rows: list[DefenseRow]

    @property
    def pi(self) -> Policy:
        return self.selection.pi

    def to_json(self) -> dict:
        names = self.search_names
        return {
            "schema": SWEEP_SCHEMA,
            "config": self.config.to_json(),
            "search_attacks": list(names),
            "baseline": [{"attack": n, "acc": a, "asr": s} for n, (a, s) in zip(names, self.baseline)],
            "scores": [e.to_json(names) for e in self.scores],
            "shortlist": [e.fn_id for e in self.shortlist],
            "pf": self.pf.to_json(),
            "pf_deficient": self.pf_deficient,
            "avg_base": self.selection.avg_base,
            "candidates": [c.to_json() for c in self.selection.candidates],
            "pi": self.pi.to_json(),
            "pi_fallback": self.selection.fallback,
            "search": [r.to_json() for r in self.search_rows],
            "validation": [r.to_json() for r in self.validation_rows],
        }


def run_sweep(registry: Registry, search: Sequence[SearchItem], validation: Sequence[SearchItem],
              backend: Backend, cfg: SweepConfig) -> SweepResult:
    if not search:
        raise InvalidArgument("the search set is empty")
    n_fns = len(registry) if cfg.candidates is None else len(cfg.candidates)
    if cfg.n > n_fns:
        raise ConfigError(f"n={cfg.n} exceeds the {n_fns} candidate functions")
    baseline = [(float(backend.acc(it.model, it, None)), float(backend.asr(it.model, it, None)))
                for it in search]
    scores = score_functions(registry, search, backend, cfg)
    ranked = rank_shortlist(scores, registry)
    log.info("shortlist: %s", [e.fn_id for e in ranked])
    pf = build_pf(ranked, cfg.n, registry)
    log.info("fine-tuning policy: %s", pf.ids)
    tuned = finetune_per_attack(search, pf, backend)
    selection = select_pi(pf, tuned, search, backend, cfg)
    log.info("inference policy: %s%s", selection.pi.ids, " (fallback)" if selection.fallback else "")
    search_rows = defense_rows(pf, selection.pi, search, backend, tuned)
    validation_rows = validate(pf, selection.pi, validation, backend) if validation else []
    return SweepResult(cfg, [it.name for it in search], baseline, scores, ranked, pf,
                       len(ranked) < cfg.n, tuned, selection, search_rows, validation_rows)


# ----------------------------------------------------------------------------
# text tables


def shortlist_table(doc: dict, top: int | None = None) -> str:
    """Function | Average ASR | per search attack ASR, ACC; baseline row first."""
    names = doc["search_attacks"]
    cols = [("", "Function"), ("", "Average ASR")]
    for n in names:
        cols += [(n, "ASR"), (n, "ACC")]
    base = doc["baseline"]
    rows = [["Baseline", fmt_rate(sum(b["asr"] for b in base) / len(base))]
            + [x for b in base for x in (fmt_rate(b["asr"]), fmt_rate(b["acc"]))]]
    by_id = {e["id"]: e for e in doc["scores"]}
    listed = doc["shortlist"] if top is None else doc["shortlist"][:top]
    for fn_id in listed:
        e = by_id[fn_id]
        rows.append([fn_id, fmt_rate(e["avg_asr"])]
                    + [x for n in names for x in (fmt_rate(e["asr"][n]), fmt_rate(e["acc"][n]))])
    return render_table(cols, rows)


def defense_table(rows: Sequence[dict], model_dataset: str) -> str:
    """Attack | Model & Dataset | Baseline | P_f FT + P_i Inf | P_f FT + P_f Inf."""
    groups = [("Baseline", "baseline"),
              ("P_f Fine-tuning + P_i Inference", "pf_finetune_pi_inference"),
              ("P_f Fine-tuning + P_f Inference", "pf_finetune_pf_inference")]
    cols = [("", "Attack"), ("", "Model & Dataset")]
    for label, _ in groups:
        cols += [(label, "ACC"), (label, "ASR")]
    body = []
    for r in rows:
        line = [r["attack"], model_dataset]
        for _, key in groups:
            line += [fmt_rate(r[key]["acc"]), fmt_rate(r[key]["asr"])]
        body.append(line)
    return render_table(cols, body)
