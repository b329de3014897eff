"""Run configuration, the two-stage defense, and the artifact layout of a run.

Run config (``sweepkit.run/1``)::

    {
      "schema": "sweepkit.run/1",
      "seed": 0,
      "dataset": {"source": "shapes", "n_train": 2000, "n_test": 500,
                  "n_clean": 2000, "num_classes": 10, "dims": [32, 32, 3]},
      "attacks": "default",
      "attack": "badnets",
      "train": {"epochs": 30, ...},
      "sweep": {"eps_acc": 0.7, "n": 6, ...},
      "defense": {"pf": null, "pi": null, "epochs": 5, "clean_samples": null}
    }

``dataset.source`` is one of ``shapes`` (generated), ``cifar10`` (binary
batches), ``ppm`` (image directory with ``labels.txt``) or ``file`` (the
native dataset format). The last three take ``train`` and ``test`` paths and
an optional ``clean`` path for the defender's own clean pool; without it the
defender uses the unpoisoned training data. Relative paths resolve against
the config file.

``attacks`` is ``"default"`` or a list of attack-instance objects; ``attack``
names the one the single-model commands work on. ``defense.pf``/``pi`` may be
left null to take the policies found by ``sweep``.

Every random choice is driven by a child of the master ``seed``
(:func:`sweepkit.rng.derive_seed` with a purpose tag), so one seed pins down
every artifact.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from . import data as dataio
from . import metrics
from .attacks import SEARCH, VALIDATION, AttackInstance, attack_db_default, poison_dataset
from .data import LabeledDataset
from .errors import ConfigError, FormatError, InvalidArgument
from . import model as modelio
from .model import TinyClassifier, TrainConfig, fine_tune, model_bytes
from .policy import Policy, apply_policy
from .registry import Registry, registry_default
from .rng import Rng, derive_seed
from .sweep import ImageBackend, SearchItem, SweepConfig, defense_table, run_sweep, shortlist_table
from .tables import fmt_rate

RUN_SCHEMA = "sweepkit.run/1"
DEFENDED_SCHEMA = "sweepkit.defended/1"
REPORT_SCHEMA = "sweepkit.report/1"

log = logging.getLogger(__name__)

DEFAULT_DATASET = {
    "source": "shapes",
    "n_train": 2000,
    "n_test": 500,
    "n_clean": 2000,
    "num_classes": 10,
    "dims": [32, 32, 3],
}
DEFAULT_DEFENSE = {"pf": None, "pi": None, "epochs": 5, "clean_samples": None}
SOURCES = ("shapes", "cifar10", "ppm", "file")


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def digest(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ----------------------------------------------------------------------------
# run config


@dataclass(frozen=True)
class RunConfig:
    seed: int
    dataset: dict
    attacks: object  # "default" or list of attack-instance dicts
    attack: str
    train: TrainConfig
    sweep: SweepConfig
    defense: dict
    base_dir: Path = Path(".")

    @classmethod
    def from_json(cls, doc: dict, base_dir=".") -> RunConfig:
        if not isinstance(doc, dict):
            raise ConfigError("run config must be a JSON object")
        if doc.get("schema", RUN_SCHEMA) != RUN_SCHEMA:
            raise ConfigError(f"unsupported run config schema {doc.get('schema')!r}")
        known = {"schema", "seed", "dataset", "attacks", "attack", "train", "sweep", "defense"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown run config keys {sorted(unknown)}")
        if "seed" not in doc:
            raise ConfigError("run config needs a master seed")
        seed = _as_seed(doc["seed"])
        ds_doc = doc.get("dataset", {})
        if not isinstance(ds_doc, dict):
            raise ConfigError("'dataset' must be an object")
        source = ds_doc.get("source", "shapes")
        dataset = {**DEFAULT_DATASET, **ds_doc} if source == "shapes" else dict(ds_doc)
        if source not in SOURCES:
            raise ConfigError(f"dataset source must be one of {SOURCES}")
        train_doc = dict(doc.get("train", {}))
        if "seed" in train_doc:
            raise ConfigError("train.seed is derived from the master seed; set 'seed' instead")
        sweep_doc = dict(doc.get("sweep", {}))
        if "seed" in sweep_doc:
            raise ConfigError("sweep.seed is derived from the master seed; set 'seed' instead")
        defense = {**DEFAULT_DEFENSE, **doc.get("defense", {})}
        if set(defense) - set(DEFAULT_DEFENSE):
            raise ConfigError(f"unknown defense keys {sorted(set(defense) - set(DEFAULT_DEFENSE))}")
        attacks = doc.get("attacks", "default")
        if attacks != "default" and not isinstance(attacks, list):
            raise ConfigError("'attacks' must be \"default\" or a list of attack instances")
        cfg = cls(
            seed=seed,
            dataset=dataset,
            attacks=attacks,
            attack=str(doc.get("attack", "badnets")),
            train=TrainConfig.from_json(train_doc),
            sweep=SweepConfig.from_json({**sweep_doc, "seed": derive_seed(seed, "sweep")}),
            defense=defense,
            base_dir=Path(base_dir),
        )
        if cfg.attack not in [a.name for a in cfg.attack_instances()]:
            raise ConfigError(f"attack {cfg.attack!r} is not in the attack list")
        for key in ("pf", "pi"):
            if defense[key] is not None:
                Policy.from_json(defense[key]).validate(registry_default())
        if int(defense["epochs"]) < 1:
            raise ConfigError("defense.epochs must be positive")
        return cfg

    @classmethod
    def load(cls, path, seed: int | None = None) -> RunConfig:
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from None
        if seed is not None:
            if not isinstance(doc, dict):
                raise ConfigError("run config must be a JSON object")
            doc["seed"] = seed
        return cls.from_json(doc, path.parent)

    def to_json(self) -> dict:
        sweep = self.sweep.to_json()
        del sweep["seed"]
        train = self.train.to_json()
        del train["seed"]
        return {
            "schema": RUN_SCHEMA,
            "seed": self.seed,
            "dataset": copy.deepcopy(self.dataset),
            "attacks": copy.deepcopy(self.attacks),
            "attack": self.attack,
            "train": train,
            "sweep": sweep,
            "defense": copy.deepcopy(self.defense),
        }

    def digest(self) -> str:
        return digest(self.to_json())

    def with_seed(self, seed: int) -> RunConfig:
        doc = self.to_json()
        doc["seed"] = seed
        return RunConfig.from_json(doc, self.base_dir)

    # -- derived pieces --------------------------------------------------

    def child_seed(self, tag: str, index: int = 0) -> int:
        return derive_seed(self.seed, tag, index)

    def dims(self) -> tuple[int, int, int] | None:
        if self.dataset["source"] == "shapes":
            return tuple(int(v) for v in self.dataset["dims"])
        if self.dataset["source"] == "cifar10":
            return (32, 32, 3)
        return None

    def attack_instances(self, dims=None, num_classes=None) -> list[AttackInstance]:
        if self.attacks == "default":
            dims = dims or self.dims() or (32, 32, 3)
            k = num_classes or int(self.dataset.get("num_classes", 10))
            return attack_db_default(dims, k, self.child_seed("attacks"))
        insts = [AttackInstance.from_json(a) for a in self.attacks]
        names = [i.name for i in insts]
        if len(set(names)) != len(names):
            raise ConfigError("attack names must be unique")
        return insts

    def train_config(self, index: int) -> TrainConfig:
        return replace(self.train, seed=self.child_seed("train", index))

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _as_seed(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 0 or v >= 1 << 64:
        raise ConfigError("seed must be an integer in [0, 2**64)")
    return v


# ----------------------------------------------------------------------------
# datasets


def _load_any(source: str, path: Path) -> LabeledDataset:
    if source == "cifar10":
        return dataio.load_cifar10_binary(path)
    if source == "ppm":
        return dataio.load_ppm_dir(path)
    return dataio.load_dataset(path)


def build_datasets(cfg: RunConfig) -> dict[str, LabeledDataset]:
    """``train``, ``test`` and ``clean`` (the defender's pool)."""
    d = cfg.dataset
    if d["source"] == "shapes":
        dims = tuple(int(v) for v in d["dims"])
        k = int(d["num_classes"])
        return {
            "train": dataio.gen_shapes_dataset(int(d["n_train"]), k, dims, cfg.child_seed("data.train")),
            "test": dataio.gen_shapes_dataset(int(d["n_test"]), k, dims, cfg.child_seed("data.test")),
            "clean": dataio.gen_shapes_dataset(int(d["n_clean"]), k, dims, cfg.child_seed("data.clean")),
        }
    for key in ("train", "test"):
        if key not in d:
            raise ConfigError(f"dataset source {d['source']!r} needs a '{key}' path")
    out = {key: _load_any(d["source"], cfg.resolve(d[key])) for key in ("train", "test")}
    out["clean"] = _load_any(d["source"], cfg.resolve(d["clean"])) if d.get("clean") else out["train"]
    if out["train"].dims != out["test"].dims:
        raise FormatError("train and test images differ in size")
    return out


# ----------------------------------------------------------------------------
# defense


@dataclass
class DefendedModel:
    """Fine-tuned model bound to its mandatory inference policy."""

    model: TinyClassifier
    pi: Policy
    pf: Policy
    provenance: dict

    def __post_init__(self):
        if not self.pi:
            raise InvalidArgument("a defended model needs a non-empty inference policy")

    def to_json(self, model_file: str = "model.swkm") -> dict:
        return {
            "schema": DEFENDED_SCHEMA,
            "model": model_file,
            "model_sha256": hashlib.sha256(model_bytes(self.model)).hexdigest(),
            "pf": self.pf.to_json(),
            "pi": self.pi.to_json(),
            "provenance": dict(self.provenance),
        }


def defend(infected: TinyClassifier, clean: LabeledDataset, pf: Policy, pi: Policy,
           epochs: int = 5, train_cfg: TrainConfig = TrainConfig(), seed: int = 0,
           clean_samples: int | None = None, registry: Registry | None = None,
           provenance: dict | None = None) -> DefendedModel:
    """Fine-tune on ``pf``-transformed clean data, then bind ``pi`` for inference."""
    if not pf or not pi:
        raise InvalidArgument("both policies must be non-empty")
    registry = registry or registry_default()
    pf.validate(registry)
    pi.validate(registry)
    pool = clean
    if clean_samples is not None and clean_samples < len(clean):
        pool = metrics.eval_subset(clean, clean_samples, seed, "defend.pool")
    images = metrics.transform_images(pool.images, pf, derive_seed(seed, "defend.transform"),
                                      "finetune.transform", registry)
    tuned = fine_tune(infected, LabeledDataset(images, pool.labels, pool.num_classes), epochs,
                      replace(train_cfg, seed=derive_seed(seed, "defend.shuffle")))
    prov = {"seed": seed, "epochs": epochs, "clean_samples": len(pool)}
    prov.update(provenance or {})
    return DefendedModel(tuned, pi, pf, prov)


def sample_seed(run_seed: int, index: int, tag: str = metrics.CLEAN_TAG) -> int:
    """Per-sample preprocessing seed, the same one :mod:`sweepkit.metrics` uses."""
    return derive_seed(run_seed, tag, index)


def defended_predict(dm: DefendedModel, img, seed: int, registry: Registry | None = None) -> int:
    """Apply ``dm.pi`` with a generator seeded by ``seed``, then classify."""
    return dm.model.predict(apply_policy(dm.pi, img, Rng(seed), registry))


# ----------------------------------------------------------------------------
# report


def eval_block(model, test: LabeledDataset, inst: AttackInstance, policy: Policy | None,
               seed: int) -> dict:
    return metrics.evaluate(model, test, inst, policy, seed).to_json()


def build_report(cfg: RunConfig, inst: AttackInstance, infected: TinyClassifier,
                 dm: DefendedModel, test: LabeledDataset, model_dataset: str,
                 sweep_doc: dict | None = None) -> dict:
    seed = cfg.child_seed("eval")
    return {
        "schema": REPORT_SCHEMA,
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "attack": inst.to_json(),
        "model_dataset": model_dataset,
        "pf": dm.pf.to_json(),
        "pi": dm.pi.to_json(),
        "baseline": eval_block(infected, test, inst, None, seed),
        "defended": eval_block(dm.model, test, inst, dm.pi, seed),
        "pf_inference": eval_block(dm.model, test, inst, dm.pf, seed),
        "sweep": sweep_doc,
    }


def model_dataset_label(cfg: RunConfig) -> str:
    return {"shapes": "TinyClassifier (Shapes)", "cifar10": "TinyClassifier (Cifar10)"}.get(
        cfg.dataset["source"], "TinyClassifier")


def report_text(report: dict) -> str:
    """Text tables for a report: the evaluated attack, then the sweep tables if present."""
    out = []
    row = {
        "attack": report["attack"]["name"],
        "baseline": report["baseline"],
        "pf_finetune_pi_inference": report["defended"],
        "pf_finetune_pf_inference": report["pf_inference"],
    }
    out.append("Defense on the evaluated attack")
    out.append(defense_table([row], report["model_dataset"]))
    out.append("P_f: " + ", ".join(s["id"] for s in report["pf"]["steps"]))
    out.append("P_i: " + ", ".join(s["id"] for s in report["pi"]["steps"]))
    out.append("config digest: " + report["config_digest"] + "\n")
    sw = report.get("sweep")
    if sw:
        out.append(sweep_text(sw, report["model_dataset"]))
    return "\n".join(out)


def sweep_text(doc: dict, model_dataset: str) -> str:
    out = [f"Shortlisted augmentation functions (ACC > {doc['config']['eps_acc']})",
           shortlist_table(doc)]
    if doc.get("pf_deficient"):
        out.append(f"warning: fewer than n={doc['config']['n']} functions passed the threshold\n")
    cand = [c for c in doc["candidates"] if c["qualified"]]
    out.append(f"avg_base = {fmt_rate(doc['avg_base'])}; {len(cand)} of {len(doc['candidates'])} "
               f"subsets qualify" + ("; no subset qualified, P_i = P_f" if doc["pi_fallback"] else "") + "\n")
    out.append("Search attacks")
    out.append(defense_table(doc["search"], model_dataset))
    if doc["validation"]:
        out.append("Validation attacks")
        out.append(defense_table(doc["validation"], model_dataset))
    return "\n".join(out)


# ----------------------------------------------------------------------------
# run directory


class RunDir:
    """Artifacts of one run under ``out``::

        data/{train,test,clean}.swkd
        poison/<attack>.swkd, poison/<attack>.json
        models/<attack>.swkm, models/<attack>.json     infected models
        sweep/sweep.json, sweep/*.txt, sweep/models/   search results
        defended/model.swkm, defended/defended.json
        report.json, report.txt
    """

    def __init__(self, cfg: RunConfig, out):
        self.cfg = cfg
        self.out = Path(out)
        self.registry = registry_default()

    def path(self, *parts) -> Path:
        return self.out.joinpath(*parts)

    def _write(self, rel: str, payload) -> Path:
        p = self.path(rel)
        p.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(payload, bytes):
            p.write_bytes(payload)
        else:
            p.write_text(payload)
        return p

    def _read_json(self, rel: str) -> dict:
        p = self.path(rel)
        try:
            return json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{p}: not valid JSON ({exc})") from None

    # -- data ------------------------------------------------------------

    def gen_data(self) -> dict[str, LabeledDataset]:
        sets = build_datasets(self.cfg)
        for name, ds in sets.items():
            self.path("data").mkdir(parents=True, exist_ok=True)
            dataio.save_dataset(ds, self.path("data", f"{name}.swkd"))
        return sets

    def datasets(self) -> dict[str, LabeledDataset]:
        try:
            return {n: dataio.load_dataset(self.path("data", f"{n}.swkd")) for n in ("train", "test", "clean")}
        except FileNotFoundError as exc:
            raise FileNotFoundError(f"{exc.filename} is missing; run gen-data first") from None

    def attacks(self, ds: LabeledDataset) -> list[AttackInstance]:
        return self.cfg.attack_instances(ds.dims, ds.num_classes)

    def selected(self, ds: LabeledDataset) -> tuple[int, AttackInstance]:
        for i, inst in enumerate(self.attacks(ds)):
            if inst.name == self.cfg.attack:
                return i, inst
        raise ConfigError(f"attack {self.cfg.attack!r} is not in the attack list")

    # -- poison and train ------------------------------------------------

    def poison_one(self, index: int, inst: AttackInstance, train: LabeledDataset):
        return poison_dataset(train, inst, Rng(self.cfg.child_seed("poison", index)))

    def poison(self) -> Path:
        train = self.datasets()["train"]
        i, inst = self.selected(train)
        poisoned, idx = self.poison_one(i, inst, train)
        self.path("poison").mkdir(parents=True, exist_ok=True)
        dataio.save_dataset(poisoned, self.path("poison", f"{inst.name}.swkd"))
        self._write(f"poison/{inst.name}.json",
                    dump_json({"attack": inst.to_json(), "poisoned_indices": idx.tolist()}))
        return self.path("poison", f"{inst.name}.swkd")

    def _model_tag(self, inst: AttackInstance) -> str:
        # what an infected model depends on
        return digest({"seed": self.cfg.seed, "dataset": self.cfg.dataset, "attack": inst.to_json(),
                       "train": self.cfg.train.to_json()})

    def infected(self, index: int, inst: AttackInstance, sets, poisoned: LabeledDataset | None = None,
                 retrain: bool = False) -> TinyClassifier:
        """Infected model for ``inst``; reused from ``models/`` when its tag matches."""
        mpath = self.path("models", f"{inst.name}.swkm")
        tag = self._model_tag(inst)
        side = self.path("models", f"{inst.name}.json")
        if not retrain and mpath.exists() and side.exists():
            if self._read_json(f"models/{inst.name}.json").get("tag") == tag:
                return modelio.load(mpath)
        if poisoned is None:
            poisoned, _ = self.poison_one(index, inst, sets["train"])
        log.info("training infected model for %s", inst.name)
        m = modelio.train(poisoned, self.cfg.train_config(index))
        self._write(f"models/{inst.name}.swkm", model_bytes(m))
        self._write(f"models/{inst.name}.json", dump_json({"attack": inst.name, "tag": tag}))
        return m

    def train(self) -> tuple[TinyClassifier, dict]:
        sets = self.datasets()
        i, inst = self.selected(sets["train"])
        ppath = self.path("poison", f"{inst.name}.swkd")
        if not ppath.exists():
            raise FileNotFoundError(f"{ppath} is missing; run poison first")
        m = self.infected(i, inst, sets, dataio.load_dataset(ppath), retrain=True)
        return m, metrics.evaluate(m, sets["test"], inst, None, self.cfg.child_seed("eval")).to_json()

    # -- sweep -----------------------------------------------------------

    def sweep(self) -> dict:
        cfg = self.cfg
        sets = self.datasets()
        insts = self.attacks(sets["train"])
        scfg = cfg.sweep
        eval_clean = metrics.eval_subset(sets["test"], scfg.eval_samples, cfg.child_seed("sweep.eval_subset"))
        pool = metrics.eval_subset(sets["clean"], scfg.finetune_count(len(sets["clean"])),
                                   cfg.child_seed("sweep.finetune_pool"))
        items = {SEARCH: [], VALIDATION: []}
        for i, inst in enumerate(insts):
            m = self.infected(i, inst, sets)
            items[inst.role].append(SearchItem(inst.name, m, inst, eval_clean, pool))
        backend = ImageBackend(scfg, cfg.train, self.registry)
        result = run_sweep(self.registry, items[SEARCH], items[VALIDATION], backend, scfg)
        doc = result.to_json()
        doc["config_digest"] = cfg.digest()
        self._write("sweep/sweep.json", dump_json(doc))
        label = model_dataset_label(cfg)
        self._write("sweep/shortlist.txt", shortlist_table(doc))
        self._write("sweep/search.txt", defense_table(doc["search"], label))
        self._write("sweep/validation.txt", defense_table(doc["validation"], label))
        for item, tuned in zip(items[SEARCH], result.tuned):
            self._write(f"sweep/models/{item.name}.swkm", model_bytes(tuned))
        return doc

    def sweep_doc(self) -> dict | None:
        p = self.path("sweep", "sweep.json")
        return self._read_json("sweep/sweep.json") if p.exists() else None

    # -- defend, eval, report --------------------------------------------

    def policies(self) -> tuple[Policy, Policy]:
        d = self.cfg.defense
        sw = None
        if d["pf"] is None or d["pi"] is None:
            sw = self.sweep_doc()
            if sw is None:
                raise FileNotFoundError("defense policies are not configured and sweep/sweep.json "
                                        "is missing; run sweep first")
        pf = Policy.from_json(d["pf"] if d["pf"] is not None else sw["pf"])
        pi = Policy.from_json(d["pi"] if d["pi"] is not None else sw["pi"])
        return pf, pi

    def defend(self) -> DefendedModel:
        cfg = self.cfg
        sets = self.datasets()
        i, inst = self.selected(sets["train"])
        mpath = self.path("models", f"{inst.name}.swkm")
        if not mpath.exists():
            raise FileNotFoundError(f"{mpath} is missing; run train first")
        infected = modelio.load(mpath)
        pf, pi = self.policies()
        dm = defend(infected, sets["clean"], pf, pi, int(cfg.defense["epochs"]), cfg.train,
                    cfg.child_seed("defend"), cfg.defense["clean_samples"], self.registry,
                    {"config_digest": cfg.digest(), "attack": inst.name, "master_seed": cfg.seed})
        self._write("defended/model.swkm", model_bytes(dm.model))
        self._write("defended/defended.json", dump_json(dm.to_json("model.swkm")))
        return dm

    def load_defended(self) -> DefendedModel:
        meta = self._read_json("defended/defended.json")
        if meta.get("schema") != DEFENDED_SCHEMA:
            raise FormatError("defended/defended.json has an unknown schema")
        raw = self.path("defended", meta["model"]).read_bytes()
        if hashlib.sha256(raw).hexdigest() != meta["model_sha256"]:
            raise FormatError("defended model file does not match its recorded checksum")
        if meta["provenance"].get("config_digest") != self.cfg.digest():
            raise ConfigError("the defended model was produced by a different run config; run defend again")
        return DefendedModel(modelio.parse_model(raw), Policy.from_json(meta["pi"]),
                             Policy.from_json(meta["pf"]), meta["provenance"])

    def evaluate(self) -> dict:
        sets = self.datasets()
        i, inst = self.selected(sets["train"])
        mpath = self.path("models", f"{inst.name}.swkm")
        if not mpath.exists():
            raise FileNotFoundError(f"{mpath} is missing; run train first")
        dm = self.load_defended()
        report = build_report(self.cfg, inst, modelio.load(mpath), dm, sets["test"],
                              model_dataset_label(self.cfg), self.sweep_doc())
        self._write("report.json", dump_json(report))
        return report

    def report(self) -> str:
        p = self.path("report.json")
        if not p.exists():
            raise FileNotFoundError(f"{p} is missing; run eval first")
        doc = self._read_json("report.json")
        if doc.get("schema") != REPORT_SCHEMA:
            raise FormatError(f"{p} has an unknown schema")
        text = report_text(doc)
        self._write("report.txt", text)
        return text
