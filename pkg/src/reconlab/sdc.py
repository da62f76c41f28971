"""Input-side statistical disclosure control.

Record swapping under geographic invariants, primary and secondary cell
suppression, and an audit that finds suppressed cells whose values can be
pinned down exactly from what is published.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from reconlab.exceptions import ConsistencyError, ParameterError, SchemaError, SolverError
from reconlab.microdata import (
    FrequencyTable,
    Geography,
    GeographyLevel,
    MicrodataSet,
    check_attributes,
    is_voting_age,
    lift_code,
    marginal,
)

CellKey = tuple[str, tuple]


# ---------------------------------------------------------------------------
# Swapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SwapConfig:
    swap_rate: float
    swap_attributes: tuple[str, ...]
    independent_per_attribute: bool = False
    invariant_level: GeographyLevel = GeographyLevel.BLOCK

    def __post_init__(self):
        if not 0 <= self.swap_rate <= 1:
            raise ParameterError("swap_rate must lie in [0, 1]")
        attrs = tuple(self.swap_attributes)
        if not attrs:
            raise ParameterError("swap_attributes must be non-empty")
        if "block_id" in attrs or "person_id" in attrs:
            raise ParameterError("block_id and person_id cannot be swapped")
        check_attributes(attrs)
        object.__setattr__(self, "swap_attributes", attrs)
        object.__setattr__(self, "invariant_level", GeographyLevel.parse(self.invariant_level))


@dataclass(frozen=True)
class SwapResult:
    microdata: MicrodataSet
    swapped_records: int
    skipped: int

    @property
    def swapped_fraction(self) -> float:
        n = len(self.microdata)
        return self.swapped_records / n if n else 0.0


def swap(md: MicrodataSet, cfg: SwapConfig, rng: np.random.Generator) -> SwapResult:
    """Exchange attribute values between record pairs in different blocks.

    Pairs are chosen so that total and voting-age population stay fixed in
    every unit at ``cfg.invariant_level``: at block level, partners exchanging
    age must share voting-age status; at coarser levels the partner must sit
    in the same invariant unit. Pairwise exchange never changes how many
    people a unit holds, so only voting-age and attribute counts can move
    below the invariant level.

    A record with no eligible partner is skipped and counted, not an error.
    """
    records = list(md.records)
    n = len(records)
    if cfg.swap_rate == 0 or n < 2:
        return SwapResult(md, 0, 0)
    geo = md.geography
    passes = [(a,) for a in cfg.swap_attributes] if cfg.independent_per_attribute else [cfg.swap_attributes]
    block = np.array([r.block_id for r in records])
    unit = np.array([geo.code(r.block_id, cfg.invariant_level) for r in records])
    touched = np.zeros(n, dtype=bool)
    skipped = 0
    values = {a: [getattr(r, a) for r in records] for a in cfg.swap_attributes}

    for attrs in passes:
        voting = np.array([is_voting_age(a) for a in values["age"]]) if "age" in attrs else None
        target_pairs = max(1, int(round(cfg.swap_rate * n / 2)))
        used = np.zeros(n, dtype=bool)
        pairs = 0
        for i in rng.permutation(n):
            if pairs >= target_pairs:
                break
            if used[i]:
                continue
            ok = ~used & (block != block[i])
            ok[i] = False
            if cfg.invariant_level == GeographyLevel.BLOCK:
                if voting is not None:
                    ok &= voting == voting[i]
            else:
                ok &= unit == unit[i]
            eligible = np.flatnonzero(ok)
            if eligible.size == 0:
                skipped += 1
                continue
            j = int(rng.choice(eligible))
            for a in attrs:
                values[a][i], values[a][j] = values[a][j], values[a][i]
            used[i] = used[j] = True
            touched[i] = touched[j] = True
            pairs += 1

    out = [replace(r, **{a: values[a][k] for a in cfg.swap_attributes}) for k, r in enumerate(records)]
    return SwapResult(md.with_records(out), int(touched.sum()), skipped)


# ---------------------------------------------------------------------------
# Suppression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuppressionPlan:
    threshold: int
    primary_cells: frozenset = field(default_factory=frozenset)
    secondary_cells: frozenset = field(default_factory=frozenset)
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "primary_cells", frozenset(self.primary_cells))
        object.__setattr__(self, "secondary_cells", frozenset(self.secondary_cells))
        if self.primary_cells & self.secondary_cells:
            raise ParameterError("primary and secondary cells overlap")

    @property
    def suppressed(self) -> frozenset:
        return self.primary_cells | self.secondary_cells

    def to_csv(self, table: FrequencyTable) -> str:
        """Serialize as ``geo_code,<dims...>,marker`` with marker P or S."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["geo_code", *table.dimensions, "marker"])
        marked = [(k, "P") for k in self.primary_cells] + [(k, "S") for k in self.secondary_cells]
        for (geo, vals), marker in sorted(marked, key=lambda km: str(km[0])):
            w.writerow([geo, *vals, marker])
        return buf.getvalue()


def primary_suppress(table: FrequencyTable, threshold: int = 1) -> SuppressionPlan:
    """Mark every cell with ``1 <= count <= threshold``. Zero cells are never primary."""
    if threshold < 1:
        raise ParameterError("threshold must be >= 1")
    cells = frozenset(k for k, c in table.cells.items() if 1 <= c <= threshold)
    return SuppressionPlan(threshold, cells)


def default_marginals(table: FrequencyTable) -> list[FrequencyTable]:
    """All marginals dropping one dimension, plus the per-geography total."""
    dims = table.dimensions
    out = [marginal(table, tuple(d for d in dims if d != drop)) for drop in dims]
    if len(dims) > 1:
        out.append(marginal(table, ()))
    return out


def _equations(
    table: FrequencyTable,
    marginals: Sequence[FrequencyTable],
    geography: Geography | None,
) -> list[tuple[list[CellKey], int]]:
    """Each published marginal cell as (table cells summing to it, value)."""
    eqs = []
    for mt in marginals:
        for d in mt.dimensions:
            if d not in table.dimensions:
                raise SchemaError(f"marginal dimension {d!r} is not in the table")
        if mt.geo_level < table.geo_level:
            raise ConsistencyError("a marginal cannot be finer than the table")
        if mt.geo_level != table.geo_level and geography is None:
            raise ConsistencyError("coarser-level marginals need the geography")
        pos = [table.dimensions.index(d) for d in mt.dimensions]
        members: dict[CellKey, list[CellKey]] = {k: [] for k in mt.cells}
        for key in table.cells:
            geo, vals = key
            if mt.geo_level != table.geo_level:
                geo = lift_code(geo, table.geo_level, mt.geo_level, geography)
            mkey = (geo, tuple(vals[p] for p in pos))
            if mkey not in members:
                raise ConsistencyError(f"marginal on {mt.dimensions} has no cell {mkey}")
            members[mkey].append(key)
        for mkey, cells in members.items():
            total = sum(table.cells[c] for c in cells)
            if total != mt.cells[mkey]:
                raise ConsistencyError(
                    f"marginal cell {mkey} publishes {mt.cells[mkey]} but the table sums to {total}"
                )
            eqs.append((cells, mt.cells[mkey]))
    return eqs


def feasible_ranges(
    table: FrequencyTable,
    suppressed: Iterable[CellKey],
    published_marginals: Sequence[FrequencyTable] | None = None,
    geography: Geography | None = None,
) -> dict[CellKey, tuple[float, float]]:
    """Integer min/max of every suppressed cell given published cells and marginals.

    The upper end is ``inf`` when no published equation bounds the cell.
    """
    hidden = sorted(set(suppressed), key=str)
    if not hidden:
        return {}
    for k in hidden:
        if k not in table.cells:
            raise ParameterError(f"suppressed cell {k} is not in the table")
    marginals = default_marginals(table) if published_marginals is None else published_marginals
    eqs = _equations(table, marginals, geography)
    index = {k: i for i, k in enumerate(hidden)}
    rows, rhs = [], []
    for cells, value in eqs:
        coeffs = np.zeros(len(hidden))
        known = 0
        for c in cells:
            if c in index:
                coeffs[index[c]] = 1.0
            else:
                known += table.cells[c]
        if coeffs.any():
            rows.append(coeffs)
            rhs.append(value - known)
    if rows:
        A = np.vstack(rows)
        b = np.array(rhs, dtype=float)
        constraints = [LinearConstraint(A, b, b)]
    else:
        constraints = []
    integrality = np.ones(len(hidden))
    bounds = Bounds(np.zeros(len(hidden)), np.full(len(hidden), np.inf))

    out = {}
    for k, i in index.items():
        ends = []
        for sign in (1.0, -1.0):
            c = np.zeros(len(hidden))
            c[i] = sign
            res = milp(c, constraints=constraints, integrality=integrality, bounds=bounds)
            if res.status == 3:  # unbounded
                ends.append(math.inf if sign < 0 else -math.inf)
            elif res.status != 0:
                raise SolverError(f"audit MILP failed for cell {k}: {res.message}", status=res.status)
            else:
                ends.append(round(sign * res.fun))
        out[k] = (ends[0], ends[1])
    return out


def audit_recoverable(
    table: FrequencyTable,
    plan: SuppressionPlan,
    published_marginals: Sequence[FrequencyTable] | None = None,
    geography: Geography | None = None,
) -> set[CellKey]:
    """Suppressed cells whose feasible integer range is a single value.

    Raises:
        ConsistencyError: a marginal disagrees with the table.
    """
    ranges = feasible_ranges(table, plan.suppressed, published_marginals, geography)
    return {k for k, (lo, hi) in ranges.items() if lo == hi}


def secondary_suppress(
    table: FrequencyTable,
    plan: SuppressionPlan,
    published_marginals: Sequence[FrequencyTable] | None = None,
    geography: Geography | None = None,
) -> SuppressionPlan:
    """Add complementary suppressions until the audit finds nothing recoverable.

    Greedy, one cell per audit round: take the first recoverable cell, find a
    published equation in which it is the only suppressed member, and
    suppress one more cell from it, preferring cells that already share an equation
    with other suppressed cells (this closes row/column rectangles), then
    non-zero cells, then small counts. If every cell in those equations is
    already suppressed and something is still recoverable, the plan is
    returned with ``degenerate=True``.
    """
    marginals = default_marginals(table) if published_marginals is None else published_marginals
    if not plan.primary_cells:
        return replace(plan, secondary_cells=frozenset())
    eqs = _equations(table, marginals, geography)
    cell_eqs: dict[CellKey, list[int]] = {k: [] for k in table.cells}
    for ei, (cells, _) in enumerate(eqs):
        for c in cells:
            cell_eqs[c].append(ei)
    suppressed = set(plan.primary_cells)

    def score(c):
        shared = sum(1 for ei in cell_eqs[c] if any(o in suppressed for o in eqs[ei][0]))
        return (-shared, table.cells[c] == 0, table.cells[c], str(c))

    while True:
        recoverable = audit_recoverable(
            table, SuppressionPlan(plan.threshold, frozenset(suppressed)), marginals, geography
        )
        if not recoverable:
            return SuppressionPlan(plan.threshold, plan.primary_cells, frozenset(suppressed - plan.primary_cells))
        progress = False
        for cell in sorted(recoverable, key=str):
            # an equation where this cell is the lone unknown is what pins it
            def pins(ei):
                return (sum(c in suppressed for c in eqs[ei][0]) != 1, len(eqs[ei][0]), ei)

            options = []
            for ei in sorted(cell_eqs[cell], key=pins):
                options = [c for c in eqs[ei][0] if c not in suppressed]
                if options:
                    break
            if options:
                suppressed.add(min(options, key=score))
                progress = True
                break  # re-audit before the next addition
        if not progress:
            for cell in recoverable:
                for ei in cell_eqs[cell]:
                    suppressed.update(eqs[ei][0])
            return SuppressionPlan(
                plan.threshold,
                plan.primary_cells,
                frozenset(suppressed - plan.primary_cells),
                degenerate=True,
            )


def publish(table: FrequencyTable, plan: SuppressionPlan) -> str:
    """Published form of the table: suppressed counts print as ``X``, never 0."""
    return table.to_csv(suppressed=plan.suppressed)
