"""Experiment configuration: schema, validation, and seeded sub-streams."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

EXPERIMENTS = (
    "dn_exhaustive",
    "dn_lp_sweep",
    "dp_budget",
    "rr_equivalence",
    "swap_invariants",
    "suppression_audit",
    "scenario_suite",
    "r_vs_r_prime",
    "regeneration_multiplicity",
)

_NOISE = ("uniform_continuous", "uniform_integer", "masked_copy")
_LEVELS = ("block", "tract", "county", "state")
_ATTRS = ("age", "gender", "race", "ethnicity", "relationship")


@dataclass(frozen=True)
class Param:
    default: Any
    check: Callable[[Any], bool]
    rule: str


def _int(lo=None, hi=None):
    def check(v):
        return isinstance(v, int) and not isinstance(v, bool) and (lo is None or v >= lo) and (hi is None or v <= hi)

    return check


def _num(lo=None, hi=None):
    def check(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool) and (lo is None or v >= lo) and (hi is None or v <= hi)

    return check


def _num_list(lo=None):
    def check(v):
        return isinstance(v, list) and len(v) > 0 and all(_num(lo)(x) for x in v)

    return check


def _choice(options):
    return lambda v: v in options


def _subset(options):
    return lambda v: isinstance(v, list) and len(v) > 0 and all(x in options for x in v)


SCHEMAS: dict[str, dict[str, Param]] = {
    "dn_exhaustive": {
        "n_values": Param([6, 8, 10], lambda v: isinstance(v, list) and v and all(_int(1, 20)(x) for x in v), "n_values: integers in [1, 20]"),
        "B_values": Param([1, 2], _num_list(0), "B_values: non-negative numbers"),
        "seeds": Param(20, _int(1), "seeds >= 1"),
        "noise": Param("uniform_continuous", _choice(_NOISE), f"noise in {_NOISE}"),
    },
    "dn_lp_sweep": {
        "n": Param(256, _int(1), "n ≥ 1"),
        "m": Param(1024, _int(1), "m ≥ 1"),
        "B_values": Param([0, 2, 8, 32, 128], _num_list(0), "B_values: non-negative numbers"),
        "seeds": Param(20, _int(1), "seeds >= 1"),
        "noise": Param("uniform_continuous", _choice(_NOISE), f"noise in {_NOISE}"),
    },
    "dp_budget": {
        "n_queries": Param(1000, _int(1), "n_queries >= 1"),
        "total_epsilon": Param(1.0, _num(1e-12), "total_epsilon > 0"),
        "n_records": Param(1000, _int(1), "n_records >= 1"),
        "extra_queries": Param(1, _int(0), "extra_queries >= 0"),
    },
    "rr_equivalence": {
        "epsilons": Param([0.0, 0.6931471805599453, 1.0986122886681098, 4.5, 10.2, 14.0, 19.61, 39.907], _num_list(0), "epsilons: non-negative numbers"),
        "tail_bounds": Param([0.5, 1.0], _num_list(0), "tail_bounds: non-negative numbers"),
        "mc_draws": Param(1_000_000, _int(1), "mc_draws >= 1"),
        "rr_p": Param(0.75, _num(0.5000001, 1), "rr_p in (0.5, 1]"),
        "rr_true_proportion": Param(0.4, _num(0, 1), "rr_true_proportion in [0, 1]"),
        "rr_n": Param(100_000, _int(1), "rr_n >= 1"),
        "delta": Param(1e-10, _num(1e-300, 0.999999), "delta in (0, 1)"),
    },
    "swap_invariants": {
        "configs": Param(50, _int(1), "configs >= 1"),
        "blocks": Param(20, _int(2), "blocks >= 2"),
        "block_size": Param(8, _int(1), "block_size >= 1"),
        "swap_rate": Param(0.1, _num(0, 1), "swap_rate in [0, 1]"),
        "swap_attributes": Param(["age", "race"], _subset(_ATTRS), f"swap_attributes subset of {_ATTRS}"),
        "independent_per_attribute": Param(False, lambda v: isinstance(v, bool), "independent_per_attribute is a boolean"),
    },
    "suppression_audit": {
        "tables": Param(100, _int(1), "tables >= 1"),
        "max_dim": Param(5, _int(2, 8), "max_dim in [2, 8]"),
        "max_count": Param(20, _int(1), "max_count >= 1"),
        "threshold": Param(1, _int(1), "threshold >= 1"),
    },
    "scenario_suite": {
        "trials": Param(1000, _int(1), "trials >= 1"),
    },
    "r_vs_r_prime": {
        "blocks": Param(20, _int(1), "blocks >= 1"),
        "block_size": Param(10, _int(1), "block_size >= 1"),
        "homogeneity": Param(1.0, _num(0, 1), "homogeneity in [0, 1]"),
        "coverage": Param(1.0, _num(0, 1), "coverage in [0, 1]"),
        "quasi_identifiers": Param(["age", "gender"], _subset(_ATTRS), f"quasi_identifiers subset of {_ATTRS}"),
        "table_dims": Param(["age", "gender", "race", "ethnicity"], _subset(_ATTRS), f"table_dims subset of {_ATTRS}"),
    },
    "regeneration_multiplicity": {
        "random_instances": Param(20, _int(0), "random_instances >= 0"),
        "max_population": Param(6, _int(1, 12), "max_population in [1, 12]"),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    parameters: Mapping[str, Any] = field(default_factory=dict)
    output_path: str | None = None

    def resolved(self) -> dict[str, Any]:
        """Parameters with schema defaults filled in."""
        schema = SCHEMAS[self.experiment]
        return {k: self.parameters.get(k, p.default) for k, p in schema.items()}

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "parameters": self.resolved(),
            "output_path": self.output_path,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ExperimentConfig":
        return cls(
            experiment=raw.get("experiment"),
            seed=raw.get("seed"),
            parameters=dict(raw.get("parameters") or {}),
            output_path=raw.get("output_path"),
        )


def validate(config: Mapping[str, Any] | ExperimentConfig) -> list[str]:
    """Return schema violations; an empty list means the config is valid."""
    raw = config.to_dict() if isinstance(config, ExperimentConfig) else dict(config)
    problems = []
    for key in raw:
        if key not in ("experiment", "seed", "parameters", "output_path"):
            problems.append(f"unknown top-level key {key!r}")
    name = raw.get("experiment")
    if name is None:
        problems.append("experiment required")
    elif name not in EXPERIMENTS:
        problems.append(f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")
    seed = raw.get("seed")
    if seed is None:
        problems.append("seed required")
    elif not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        problems.append("seed must be an integer in [0, 2^64)")
    params = raw.get("parameters") or {}
    if not isinstance(params, Mapping):
        problems.append("parameters must be an object")
    elif name in SCHEMAS:
        schema = SCHEMAS[name]
        for key, value in params.items():
            if key not in schema:
                problems.append(f"unknown parameter {key!r} for {name}")
            elif not schema[key].check(value):
                problems.append(f"invalid {key}={value!r}: {schema[key].rule}")
    out = raw.get("output_path")
    if out is not None and not isinstance(out, str):
        problems.append("output_path must be a string")
    return problems


def load_config(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` overrides; values parse as JSON, falling back to strings.

    ``seed``, ``experiment`` and ``output_path`` address the top level; any
    other key (optionally prefixed ``parameters.``) addresses a parameter.
    """
    raw = json.loads(json.dumps(raw))
    raw.setdefault("parameters", {})
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        if key in ("seed", "experiment", "output_path"):
            raw[key] = value
        else:
            raw["parameters"][key.removeprefix("parameters.")] = value
    return raw


def derive_seed(root_seed: int, label: str) -> int:
    """Stable child seed for a named call site."""
    digest = hashlib.blake2b(f"{root_seed}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def derive_rng(root_seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, label))
