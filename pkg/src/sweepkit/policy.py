"""Ordered augmentation policies and their JSON form.

A serialized policy looks like::

    {"schema": "sweepkit.policy/1",
     "steps": [{"id": "GCSM", "params": {}},
               {"id": "SAT", "params": {"rotation_limit": 4.0}}]}

``params`` holds only the overrides of a step; missing keys take the
registry defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .imgcore import as_image
from .registry import Registry, registry_default
from .rng import Rng

POLICY_SCHEMA = "sweepkit.policy/1"


@dataclass(frozen=True)
class Step:
    id: str
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.id, "params": dict(sorted(self.params.items()))}


@dataclass(frozen=True)
class Policy:
    steps: tuple[Step, ...]

    @classmethod
    def of(cls, *ids: str) -> Policy:
        return cls(tuple(Step(i) for i in ids))

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.steps]

    def __len__(self) -> int:
        return len(self.steps)

    def __bool__(self) -> bool:
        return bool(self.steps)

    def validate(self, registry: Registry) -> None:
        if not self.steps:
            raise ConfigError("policy must have at least one step")
        for step in self.steps:
            registry[step.id].bind(**step.params)

    def to_json(self) -> dict:
        return {"schema": POLICY_SCHEMA, "steps": [s.to_json() for s in self.steps]}

    @classmethod
    def from_json(cls, doc) -> Policy:
        if isinstance(doc, list):  # bare list of steps
            doc = {"schema": POLICY_SCHEMA, "steps": doc}
        if doc.get("schema", POLICY_SCHEMA) != POLICY_SCHEMA:
            raise ConfigError(f"unsupported policy schema {doc.get('schema')!r}")
        steps = []
        for item in doc.get("steps", []):
            if isinstance(item, str):
                steps.append(Step(item))
            elif isinstance(item, dict) and "id" in item:
                steps.append(Step(item["id"], dict(item.get("params", {}))))
            else:
                raise ConfigError(f"malformed policy step {item!r}")
        return cls(tuple(steps))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> Policy:
        return cls.from_json(json.loads(text))


def apply_policy(policy: Policy, img, rng: Rng, registry: Registry | None = None) -> np.ndarray:
    """Run each step in order on ``img``, threading ``rng`` through all of them."""
    registry = registry or _default_registry()
    if not policy.steps:
        raise ConfigError("policy must have at least one step")
    out = as_image(img)
    for step in policy.steps:
        out = registry[step.id](out, rng, **step.params)
    return out


_DEFAULT: Registry | None = None


def _default_registry() -> Registry:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = registry_default()
    return _DEFAULT
