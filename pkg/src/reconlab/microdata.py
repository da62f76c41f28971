"""Person-level microdata, geography hierarchy, and frequency tabulation."""

from __future__ import annotations

import csv
import io
import re
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from enum import IntEnum
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from reconlab.exceptions import ConsistencyError, ParameterError, SchemaError

GENDERS = ("Male", "Female")
RACES = (
    "White",
    "Black",
    "American_Indian_Alaska_Native",
    "Asian",
    "Native_Hawaiian_Pacific_Islander",
    "Some_Other_Race",
    "Two_or_More",
)
ETHNICITIES = ("Hispanic", "Not_Hispanic")
RELATIONSHIPS = (
    "Householder",
    "Spouse",
    "Biological_Child",
    "Adopted_Child",
    "Stepchild",
    "Sibling",
    "Parent",
    "Grandchild",
    "Parent_in_Law",
    "Child_in_Law",
    "Other_Relative",
    "Roomer_or_Boarder",
    "Housemate_or_Roommate",
    "Unmarried_Partner",
    "Foster_Child",
    "Other_Nonrelative",
    "Group_Quarters",
)
MAX_AGE = 115
VOTING_AGE = 18

# attribute -> allowed values (None = integer range check)
ATTRIBUTES: dict[str, tuple | None] = {
    "age": None,
    "gender": GENDERS,
    "race": RACES,
    "ethnicity": ETHNICITIES,
    "relationship": RELATIONSHIPS,
}
MICRODATA_HEADER = ("person_id", "block_id", "age", "gender", "race", "ethnicity", "relationship")


class GeographyLevel(IntEnum):
    BLOCK = 0
    TRACT = 1
    COUNTY = 2
    STATE = 3

    @classmethod
    def parse(cls, value: "GeographyLevel | str | int") -> "GeographyLevel":
        if isinstance(value, GeographyLevel):
            return value
        if isinstance(value, int):
            return cls(value)
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ParameterError(f"unknown geography level {value!r}") from None


def check_attributes(names: Iterable[str], allowed: Iterable[str] = ATTRIBUTES) -> tuple[str, ...]:
    names = tuple(names)
    allowed = set(allowed)
    for name in names:
        if name not in allowed:
            raise SchemaError(f"unknown attribute {name!r}; expected one of {sorted(allowed)}")
    return names


def is_voting_age(age: int) -> bool:
    return age >= VOTING_AGE


@dataclass(frozen=True)
class PersonRecord:
    person_id: str
    block_id: str
    age: int
    gender: str
    race: str
    ethnicity: str
    relationship: str

    def __post_init__(self):
        if not 0 <= int(self.age) <= MAX_AGE:
            raise ParameterError(f"age {self.age} outside [0, {MAX_AGE}]")
        object.__setattr__(self, "age", int(self.age))
        for name, allowed in ATTRIBUTES.items():
            if allowed is not None and getattr(self, name) not in allowed:
                raise ParameterError(f"{name}={getattr(self, name)!r} not in {allowed}")

    def values(self, dims: Sequence[str]) -> tuple:
        return tuple(getattr(self, d) for d in dims)


@dataclass(frozen=True)
class Geography:
    """Strict Block < Tract < County < State tree."""

    block_tract: Mapping[str, str]
    tract_county: Mapping[str, str]
    county_state: Mapping[str, str]

    @classmethod
    def regular(cls, states: int = 1, counties: int = 1, tracts: int = 1, blocks: int = 1) -> "Geography":
        """Build a balanced tree with the given fan-out at each level."""
        bt, tc, cs = {}, {}, {}
        for s in range(1, states + 1):
            sc = f"S{s}"
            for c in range(1, counties + 1):
                cc = f"{sc}C{c}"
                cs[cc] = sc
                for t in range(1, tracts + 1):
                    tcode = f"{cc}T{t}"
                    tc[tcode] = cc
                    for b in range(1, blocks + 1):
                        bt[f"{tcode}B{b}"] = tcode
        return cls(bt, tc, cs)

    @classmethod
    def from_block_ids(cls, block_ids: Iterable[str]) -> "Geography":
        """Infer the tree from ``S<i>C<j>T<k>B<l>`` codes; other codes get singleton parents."""
        pattern = re.compile(r"^(((S\w+?)C\w+?)T\w+?)B\w+$")
        bt, tc, cs = {}, {}, {}
        for b in block_ids:
            m = pattern.match(b)
            if m:
                tract, county, state = m.group(1), m.group(2), m.group(3)
            else:
                tract, county, state = f"{b}/T", f"{b}/C", f"{b}/S"
            bt[b] = tract
            tc[tract] = county
            cs[county] = state
        return cls(bt, tc, cs)

    @property
    def blocks(self) -> list[str]:
        return list(self.block_tract)

    def code(self, block_id: str, level: GeographyLevel) -> str:
        level = GeographyLevel.parse(level)
        try:
            code = block_id
            if level >= GeographyLevel.TRACT:
                code = self.block_tract[code]
            if level >= GeographyLevel.COUNTY:
                code = self.tract_county[code]
            if level >= GeographyLevel.STATE:
                code = self.county_state[code]
        except KeyError:
            raise SchemaError(f"block {block_id!r} is not in the geography") from None
        if level == GeographyLevel.BLOCK and block_id not in self.block_tract:
            raise SchemaError(f"block {block_id!r} is not in the geography")
        return code

    def units(self, level: GeographyLevel) -> list[str]:
        seen = dict.fromkeys(self.code(b, level) for b in self.block_tract)
        return list(seen)


@dataclass(frozen=True)
class MicrodataSet:
    records: tuple[PersonRecord, ...]
    geography: Geography

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = Counter(r.person_id for r in self.records)
        dupes = [pid for pid, k in ids.items() if k > 1]
        if dupes:
            raise ParameterError(f"person_id not unique: {dupes[:3]}")
        known = self.geography.block_tract
        for r in self.records:
            if r.block_id not in known:
                raise SchemaError(f"record {r.person_id} has block {r.block_id!r} outside the geography")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_block(self) -> dict[str, list[PersonRecord]]:
        out: dict[str, list[PersonRecord]] = {}
        for r in self.records:
            out.setdefault(r.block_id, []).append(r)
        return out

    def population(self, level: GeographyLevel = GeographyLevel.BLOCK, voting_age_only: bool = False) -> Counter:
        """Per-unit head counts at ``level`` (every unit present, zeros included)."""
        counts = Counter({u: 0 for u in self.geography.units(level)})
        for r in self.records:
            if voting_age_only and not is_voting_age(r.age):
                continue
            counts[self.geography.code(r.block_id, level)] += 1
        return counts

    def with_records(self, records: Iterable[PersonRecord]) -> "MicrodataSet":
        return replace(self, records=tuple(records))


@dataclass(frozen=True)
class FrequencyTable:
    """Counts keyed by ``(geo_code, values)``; zero cells are stored explicitly."""

    geo_level: GeographyLevel
    dimensions: tuple[str, ...]
    cells: Mapping[tuple[str, tuple], int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "geo_level", GeographyLevel.parse(self.geo_level))
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        clean = {}
        for (geo, vals), count in self.cells.items():
            vals = tuple(vals)
            if len(vals) != len(self.dimensions):
                raise ParameterError(f"cell {geo, vals} does not match dimensions {self.dimensions}")
            if int(count) != count or count < 0:
                raise ParameterError(f"cell {geo, vals} has non-integral or negative count {count}")
            clean[(geo, vals)] = int(count)
        object.__setattr__(self, "cells", clean)

    @classmethod
    def from_matrix(cls, matrix, dims=("row", "col"), geo_code="G", level=GeographyLevel.BLOCK) -> "FrequencyTable":
        """Wrap a 2-d count array; row/column labels are their integer positions."""
        cells = {}
        for i, row in enumerate(matrix):
            for j, v in enumerate(row):
                cells[(geo_code, (i, j))] = int(v)
        return cls(level, tuple(dims), cells)

    def __len__(self):
        return len(self.cells)

    @property
    def geo_codes(self) -> list[str]:
        return list(dict.fromkeys(g for g, _ in self.cells))

    def totals(self) -> Counter:
        out: Counter = Counter()
        for (geo, _), c in self.cells.items():
            out[geo] += c
        return out

    def domain(self, dim: str) -> list:
        k = self.dimensions.index(dim)
        return sorted({vals[k] for _, vals in self.cells}, key=_sort_key)

    def to_csv(self, suppressed: Iterable = ()) -> str:
        """Render as ``geo_code,<dims...>,count``; suppressed cells print ``X``."""
        hidden = set(suppressed)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["geo_code", *self.dimensions, "count"])
        for key in sorted(self.cells, key=_cell_sort_key):
            geo, vals = key
            w.writerow([geo, *vals, "X" if key in hidden else self.cells[key]])
        return buf.getvalue()


def _sort_key(v):
    return (0, v, "") if isinstance(v, (int, float)) else (1, 0, str(v))


def _cell_sort_key(key):
    geo, vals = key
    return (geo, tuple(_sort_key(v) for v in vals))


def tabulate(
    md: MicrodataSet,
    dims: Sequence[str],
    level: GeographyLevel | str = GeographyLevel.BLOCK,
    domains: Mapping[str, Sequence] | None = None,
) -> FrequencyTable:
    """Cross-tabulate ``md`` by geography unit at ``level`` and ``dims``.

    The cell lattice is every geography unit times the product of each
    dimension's domain. Domains default to the values observed anywhere in
    ``md``; pass ``domains`` to force a wider lattice.
    """
    dims = check_attributes(dims)
    level = GeographyLevel.parse(level)
    if not md.records:
        return FrequencyTable(level, dims, {})
    doms = []
    for d in dims:
        if domains and d in domains:
            doms.append(list(domains[d]))
        else:
            doms.append(sorted({getattr(r, d) for r in md.records}, key=_sort_key))
    cells = {(g, vals): 0 for g in md.geography.units(level) for vals in product(*doms)}
    for r in md.records:
        key = (md.geography.code(r.block_id, level), r.values(dims))
        if key not in cells:
            raise ParameterError(f"value {key[1]} outside the supplied domains")
        cells[key] += 1
    return FrequencyTable(level, dims, cells)


def marginal(table: FrequencyTable, dims: Sequence[str]) -> FrequencyTable:
    """Sum ``table`` down to a subset of its dimensions (same geography level)."""
    dims = tuple(dims)
    for d in dims:
        if d not in table.dimensions:
            raise SchemaError(f"{d!r} is not a dimension of the table")
    pos = [table.dimensions.index(d) for d in dims]
    cells: Counter = Counter()
    for (geo, vals), c in table.cells.items():
        cells[(geo, tuple(vals[p] for p in pos))] += c
    return FrequencyTable(table.geo_level, dims, dict(cells))


def aggregate(table: FrequencyTable, geography: Geography, level: GeographyLevel) -> FrequencyTable:
    """Roll ``table`` up to a coarser geography level."""
    level = GeographyLevel.parse(level)
    if level < table.geo_level:
        raise ParameterError("cannot aggregate to a finer level")
    cells: Counter = Counter()
    for (geo, vals), c in table.cells.items():
        cells[(lift_code(geo, table.geo_level, level, geography), vals)] += c
    return FrequencyTable(level, table.dimensions, dict(cells))


def lift_code(code: str, src: GeographyLevel, dst: GeographyLevel, geo: Geography) -> str:
    maps = (geo.block_tract, geo.tract_county, geo.county_state)
    for lvl in range(src, dst):
        try:
            code = maps[lvl][code]
        except KeyError:
            raise ConsistencyError(f"geo code {code!r} not found at level {GeographyLevel(lvl).name}") from None
    return code


def write_microdata(md: MicrodataSet, path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MICRODATA_HEADER)
    for r in md.records:
        w.writerow([getattr(r, f) for f in MICRODATA_HEADER])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def read_microdata(source: str | Path, geography: Geography | None = None) -> MicrodataSet:
    """Read the microdata CSV. ``source`` is a path or the CSV text itself."""
    text = _read_text(source)
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != MICRODATA_HEADER:
        raise SchemaError(f"microdata header must be {','.join(MICRODATA_HEADER)}")
    records = [
        PersonRecord(
            person_id=row["person_id"],
            block_id=row["block_id"],
            age=int(row["age"]),
            gender=row["gender"],
            race=row["race"],
            ethnicity=row["ethnicity"],
            relationship=row["relationship"],
        )
        for row in reader
    ]
    if geography is None:
        geography = Geography.from_block_ids(dict.fromkeys(r.block_id for r in records))
    return MicrodataSet(tuple(records), geography)


def read_frequency_table(source: str | Path, level: GeographyLevel | str = GeographyLevel.BLOCK) -> FrequencyTable:
    text = _read_text(source)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "geo_code" or rows[0][-1] != "count":
        raise SchemaError("frequency table header must be geo_code,<dims...>,count")
    dims = tuple(rows[0][1:-1])
    cells = {}
    for row in rows[1:]:
        vals = tuple(int(v) if d == "age" else v for d, v in zip(dims, row[1:-1]))
        cells[(row[0], vals)] = int(row[-1])
    return FrequencyTable(level, dims, cells)


def _read_text(source: str | Path) -> str:
    if isinstance(source, Path) or ("\n" not in str(source) and Path(str(source)).exists()):
        return Path(source).read_text(encoding="utf-8")
    return str(source)


PERSON_FIELDS = tuple(f.name for f in fields(PersonRecord))
