"""Synthetic block populations and matching identified external databases.

Besides general blocks with tunable attribute homogeneity, this builds the
three fixed 10-person block scenarios used to separate reconstruction from
reidentification:

1. everyone is (44, Male, White, Not_Hispanic); external data has age/gender;
2. as 1, but all ten have distinct relationship values;
3. everyone is (44, Male) with ten distinct (race, ethnicity) pairs; external
   data has race/ethnicity and no age or gender.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Mapping

import numpy as np

from reconlab.exceptions import ParameterError
from reconlab.linkage import ExternalDatabase, ExternalRecord, identity_of
from reconlab.microdata import (
    ATTRIBUTES,
    ETHNICITIES,
    MAX_AGE,
    RACES,
    RELATIONSHIPS,
    Geography,
    MicrodataSet,
    PersonRecord,
    check_attributes,
)

SCENARIO_SIZE = 10
SCENARIO_AGE = 44
SCENARIO_EXTERNAL_FIELDS = {1: ("age", "gender"), 2: ("age", "gender"), 3: ("race", "ethnicity")}


@dataclass(frozen=True)
class PopulationSpec:
    """Either ``scenario`` in {1, 2, 3} or a general synthetic layout.

    ``homogeneity[attr]`` is the probability that a record copies its block's
    modal value for ``attr`` instead of drawing one uniformly.
    """

    scenario: int | None = None
    states: int = 1
    counties: int = 1
    tracts: int = 1
    blocks_per_tract: int = 4
    block_size: int = 10
    homogeneity: Mapping[str, float] = field(default_factory=dict)
    external_fields: tuple[str, ...] = ("age", "gender")
    coverage: float = 1.0
    error_rate: float = 0.0
    error_k: int = 1

    def __post_init__(self):
        if self.scenario is not None and self.scenario not in SCENARIO_EXTERNAL_FIELDS:
            raise ParameterError(f"invalid scenario id {self.scenario!r}; expected 1, 2 or 3")
        for name in ("states", "counties", "tracts", "blocks_per_tract"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.block_size < 0:
            raise ParameterError("block_size must be >= 0")
        check_attributes(self.homogeneity)
        for a, h in self.homogeneity.items():
            if not 0 <= h <= 1:
                raise ParameterError(f"homogeneity[{a}] must lie in [0, 1]")
        object.__setattr__(self, "external_fields", check_attributes(self.external_fields))
        if not 0 <= self.coverage <= 1:
            raise ParameterError("coverage must lie in [0, 1]")
        if not 0 <= self.error_rate <= 1:
            raise ParameterError("error_rate must lie in [0, 1]")


def generate_block_population(
    spec: PopulationSpec | int, rng: np.random.Generator
) -> tuple[MicrodataSet, ExternalDatabase]:
    """Ground-truth microdata and an identified external database over it."""
    if isinstance(spec, int):
        spec = PopulationSpec(scenario=spec)
    if spec.scenario is not None:
        md = _scenario_microdata(spec.scenario, rng)
        fields = SCENARIO_EXTERNAL_FIELDS[spec.scenario]
    else:
        md = _synthetic_microdata(spec, rng)
        fields = spec.external_fields
    ext = build_external(md, fields, rng, spec.coverage, spec.error_rate, spec.error_k)
    return md, ext


def _scenario_microdata(scenario: int, rng: np.random.Generator) -> MicrodataSet:
    geo = Geography.regular(1, 1, 1, 1)
    block = geo.blocks[0]
    base = dict(age=SCENARIO_AGE, gender="Male", race="White", ethnicity="Not_Hispanic", relationship="Householder")
    rows = [dict(base) for _ in range(SCENARIO_SIZE)]
    if scenario == 2:
        picks = rng.choice(len(RELATIONSHIPS), size=SCENARIO_SIZE, replace=False)
        for row, k in zip(rows, picks):
            row["relationship"] = RELATIONSHIPS[int(k)]
    elif scenario == 3:
        pairs = list(product(RACES, ETHNICITIES))
        picks = rng.choice(len(pairs), size=SCENARIO_SIZE, replace=False)
        for row, k in zip(rows, picks):
            row["race"], row["ethnicity"] = pairs[int(k)]
    records = [PersonRecord(f"P{k:06d}", block, **row) for k, row in enumerate(rows)]
    return MicrodataSet(tuple(records), geo)


def _draw(attr: str, rng: np.random.Generator):
    if attr == "age":
        return int(rng.integers(0, 91))
    values = ATTRIBUTES[attr]
    return values[int(rng.integers(len(values)))]


def _synthetic_microdata(spec: PopulationSpec, rng: np.random.Generator) -> MicrodataSet:
    geo = Geography.regular(spec.states, spec.counties, spec.tracts, spec.blocks_per_tract)
    records = []
    for block in geo.blocks:
        modal = {a: _draw(a, rng) for a in ATTRIBUTES}
        for _ in range(spec.block_size):
            row = {}
            for a in ATTRIBUTES:
                h = spec.homogeneity.get(a, 0.0)
                row[a] = modal[a] if rng.random() < h else _draw(a, rng)
            records.append(PersonRecord(f"P{len(records):06d}", block, **row))
    return MicrodataSet(tuple(records), geo)


def build_external(
    md: MicrodataSet,
    fields,
    rng: np.random.Generator,
    coverage: float = 1.0,
    error_rate: float = 0.0,
    error_k: int = 1,
) -> ExternalDatabase:
    """Identified copy of ``md`` restricted to ``fields``.

    Each person is included with probability ``coverage``; with probability
    ``error_rate`` an included person's age is shifted by +/- ``error_k``.
    """
    fields = check_attributes(fields)
    out = []
    for r in md.records:
        if coverage < 1 and rng.random() >= coverage:
            continue
        attrs = {f: getattr(r, f) for f in fields}
        if error_rate and "age" in attrs and rng.random() < error_rate:
            shift = error_k if rng.random() < 0.5 else -error_k
            attrs["age"] = int(min(max(attrs["age"] + shift, 0), MAX_AGE))
        name, address = identity_of(r)
        out.append(ExternalRecord(name, address, r.block_id, attrs))
    return ExternalDatabase(fields, tuple(out), coverage)
