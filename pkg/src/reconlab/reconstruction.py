"""Reconstruction attacks.

* ``exhaustive_reconstruct``: enumerate every candidate n-bit database and keep
  those whose answers all sit within ``B`` of the released ones.
* ``lp_reconstruct``: relax the bits to ``[0, 1]``, solve the bound-constrained
  LP (minimizing L1 violation when it is infeasible), and round.
* ``regenerate_from_tables``: emit one microdata set consistent with a set of
  frequency tables, and count how many such sets exist for small inputs.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix, hstack, identity, vstack

from reconlab.core import MAX_EXHAUSTIVE_N, BinaryDatabase, QueryAnswer, SubsetQuery, query_matrix
from reconlab.exceptions import (
    CapacityError,
    ConsistencyError,
    InfeasibleError,
    ParameterError,
    SchemaError,
    SolverError,
)
from reconlab.microdata import (
    ATTRIBUTES,
    FrequencyTable,
    Geography,
    GeographyLevel,
    MicrodataSet,
    PersonRecord,
    aggregate,
    check_attributes,
    tabulate,
)

FEASIBILITY_TOL = 1e-7
# attribute values given to regenerated records when no table constrains them
DEFAULT_FILL = {
    "age": 18,
    "gender": "Male",
    "race": "White",
    "ethnicity": "Not_Hispanic",
    "relationship": "Householder",
}


@dataclass(frozen=True)
class ReconstructionResult:
    candidate: BinaryDatabase
    queries_used: int
    B: float
    distance: int | None = None
    feasible_count: int | None = None
    feasible_distances: tuple[int, ...] | None = None
    lp_violation: float | None = None

    @property
    def n(self) -> int:
        return self.candidate.n

    @property
    def disagreement_fraction(self) -> float | None:
        return None if self.distance is None else self.distance / self.n

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "B": self.B,
            "queries_used": self.queries_used,
            "distance": self.distance,
            "disagreement_fraction": self.disagreement_fraction,
        }
        if self.feasible_count is not None:
            out["feasible_count"] = self.feasible_count
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def hamming(a: BinaryDatabase, b: BinaryDatabase) -> int:
    if a.n != b.n:
        raise ParameterError(f"length mismatch: {a.n} vs {b.n}")
    return int(np.count_nonzero(a.bits != b.bits))


def disagreement_fraction(a: BinaryDatabase, b: BinaryDatabase) -> float:
    return hamming(a, b) / a.n


def _answer_vector(answers: Sequence[QueryAnswer | float]) -> np.ndarray:
    return np.array([a.value if isinstance(a, QueryAnswer) else a for a in answers], dtype=float)


def all_candidates(n: int) -> np.ndarray:
    """Every n-bit vector as rows of a ``(2**n, n)`` int8 array, in binary order."""
    codes = np.arange(2**n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(np.int8)


def feasible_candidates(
    queries: Sequence[SubsetQuery],
    answers: Sequence[QueryAnswer | float],
    n: int,
    B: float,
    chunk: int = 1 << 12,
) -> np.ndarray:
    """All candidates whose every query count lies within ``B`` of the answer."""
    if n > MAX_EXHAUSTIVE_N:
        raise CapacityError(f"exhaustive search is capped at n <= {MAX_EXHAUSTIVE_N} (got n={n})")
    if len(queries) != len(answers):
        raise ParameterError("queries and answers differ in length")
    Q = query_matrix(queries, n).astype(np.float64)
    a = _answer_vector(answers)
    kept = []
    for start in range(0, 2**n, chunk):
        codes = np.arange(start, min(start + chunk, 2**n), dtype=np.int64)
        cand = ((codes[:, None] >> np.arange(n)) & 1).astype(np.int8)
        resid = np.abs(cand.astype(np.float64) @ Q.T - a)
        ok = np.all(resid <= B + FEASIBILITY_TOL, axis=1)
        kept.append(cand[ok])
    return np.concatenate(kept) if kept else np.zeros((0, n), dtype=np.int8)


def exhaustive_reconstruct(
    queries: Sequence[SubsetQuery],
    answers: Sequence[QueryAnswer | float],
    n: int,
    B: float,
    truth: BinaryDatabase | None = None,
) -> ReconstructionResult:
    """Exponential attacker: return a candidate consistent with every answer to within ``B``.

    Among feasible candidates the one with the smallest worst-case residual is
    returned (ties broken by binary order). When ``truth`` is given, the
    Hamming distance of the returned candidate and of every feasible candidate
    is recorded.

    Raises:
        InfeasibleError: no candidate fits, i.e. the stated ``B`` understates
            the noise actually applied.
    """
    feas = feasible_candidates(queries, answers, n, B)
    if len(feas) == 0:
        raise InfeasibleError(f"no n={n} candidate fits all {len(queries)} answers within B={B}")
    Q = query_matrix(queries, n).astype(np.float64)
    resid = np.abs(feas.astype(np.float64) @ Q.T - _answer_vector(answers)).max(axis=1)
    best = BinaryDatabase(feas[int(np.argmin(resid))])
    dist = dists = None
    if truth is not None:
        dists = tuple(int(d) for d in np.count_nonzero(feas != truth.bits, axis=1))
        dist = hamming(best, truth)
    return ReconstructionResult(
        candidate=best,
        queries_used=len(queries),
        B=B,
        distance=dist,
        feasible_count=len(feas),
        feasible_distances=dists,
    )


def lp_reconstruct(
    queries: Sequence[SubsetQuery],
    answers: Sequence[QueryAnswer | float],
    n: int,
    B: float,
    truth: BinaryDatabase | None = None,
    max_iter: int = 100_000,
) -> ReconstructionResult:
    """Polynomial attacker: LP relaxation plus rounding at 0.5 (ties go to 1).

    Solves ``min sum(s_plus + s_minus)`` subject to
    ``a_q - B - s_minus_q <= sum_{i in q} x_i <= a_q + B + s_plus_q`` with
    ``x in [0, 1]`` and slacks ``>= 0``. A zero optimum is a feasible point of
    the plain DN program; otherwise the answers are fitted with least L1
    violation, which matters for unbounded (Laplace) noise.
    """
    m = len(queries)
    if m != len(answers):
        raise ParameterError("queries and answers differ in length")
    if m == 0:
        raise ParameterError("at least one query is required")
    A = csr_matrix(query_matrix(queries, n).astype(np.float64))
    a = _answer_vector(answers)
    I = identity(m, format="csr")
    Z = csr_matrix((m, m))
    # columns: x (n) | s_plus (m) | s_minus (m)
    A_ub = vstack([hstack([A, -I, Z]), hstack([-A, Z, -I])], format="csr")
    b_ub = np.concatenate([a + B, -(a - B)])
    c = np.concatenate([np.zeros(n), np.ones(2 * m)])
    bounds = [(0.0, 1.0)] * n + [(0.0, None)] * (2 * m)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs", options={"maxiter": max_iter})
    if res.status != 0:
        raise SolverError(
            f"LP attack failed: {res.message}",
            status=res.status,
            diagnostics={"n": n, "m": m, "B": B, "iterations": getattr(res, "nit", None)},
        )
    x = res.x[:n]
    cand = BinaryDatabase((x >= 0.5 - 1e-9).astype(np.int8))
    violation = float(res.fun) if res.fun > FEASIBILITY_TOL else 0.0
    return ReconstructionResult(
        candidate=cand,
        queries_used=m,
        B=B,
        distance=None if truth is None else hamming(cand, truth),
        lp_violation=violation,
    )


# ---------------------------------------------------------------------------
# Microdata re-generation from frequency tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegenerationResult:
    microdata: MicrodataSet
    multiplicity: int | None = None


def _block_level_tables(tables: Sequence[FrequencyTable]) -> list[FrequencyTable]:
    return [t for t in tables if t.geo_level == GeographyLevel.BLOCK]


def check_consistency(tables: Sequence[FrequencyTable], geography: Geography) -> None:
    """Every pair of tables must agree on shared dimensions at their common level."""
    for t1, t2 in itertools.combinations(tables, 2):
        shared = tuple(d for d in t1.dimensions if d in t2.dimensions)
        level = max(t1.geo_level, t2.geo_level)
        m1 = _project(aggregate(t1, geography, level), shared)
        m2 = _project(aggregate(t2, geography, level), shared)
        keys = set(m1) | set(m2)
        bad = [k for k in keys if m1.get(k, 0) != m2.get(k, 0)]
        if bad:
            raise ConsistencyError(
                f"tables on {t1.dimensions} and {t2.dimensions} disagree on shared margin {shared} at {sorted(bad, key=str)[:3]}"
            )


def _project(table: FrequencyTable, dims: tuple[str, ...]) -> Counter:
    pos = [table.dimensions.index(d) for d in dims]
    out: Counter = Counter()
    for (geo, vals), c in table.cells.items():
        out[(geo, tuple(vals[p] for p in pos))] += c
    return out


def regenerate_from_tables(
    tables: Sequence[FrequencyTable],
    geography: Geography | None = None,
    fill: Mapping[str, object] | None = None,
    max_population: int = 12,
    max_cells: int = 8,
) -> RegenerationResult:
    """Emit one microdata set whose tabulations reproduce every table.

    Records are created cell by cell from the first block-level table, then
    each further table assigns its dimensions greedily within groups of
    records that already agree on the dimensions the table shares with
    earlier ones. Attributes no table mentions take ``fill`` values.

    When the population is at most ``max_population`` and the tables hold at
    most ``max_cells`` cells in total, ``multiplicity`` is the exact number of
    distinct unordered microdata sets consistent with the tables.

    Raises:
        ConsistencyError: the tables disagree with each other.
        SchemaError: no block-level table is supplied.
    """
    if not tables:
        raise ParameterError("at least one table is required")
    for t in tables:
        check_attributes(t.dimensions)
    block_tables = _block_level_tables(tables)
    if not block_tables:
        raise SchemaError("regeneration needs at least one block-level table")
    if geography is None:
        geography = Geography.from_block_ids(dict.fromkeys(g for t in block_tables for g in t.geo_codes))
    check_consistency(tables, geography)
    fill = {**DEFAULT_FILL, **(fill or {})}

    ordered = sorted(tables, key=lambda t: (t.geo_level, -len(t.dimensions)))
    first = ordered[0]
    rows: list[dict] = []
    for (geo, vals), count in sorted(first.cells.items(), key=lambda kv: str(kv[0])):
        for _ in range(count):
            rows.append({"block_id": geo, **dict(zip(first.dimensions, vals))})
    assigned = set(first.dimensions)

    for table in ordered[1:]:
        shared = tuple(d for d in table.dimensions if d in assigned)
        new = tuple(d for d in table.dimensions if d not in assigned)
        groups: dict[tuple, list[dict]] = {}
        for row in rows:
            key = (geography.code(row["block_id"], table.geo_level), tuple(row[d] for d in shared))
            groups.setdefault(key, []).append(row)
        pos_shared = [table.dimensions.index(d) for d in shared]
        pos_new = [table.dimensions.index(d) for d in new]
        supply: dict[tuple, list[tuple[tuple, int]]] = {}
        for (geo, vals), count in sorted(table.cells.items(), key=lambda kv: str(kv[0])):
            if count:
                key = (geo, tuple(vals[p] for p in pos_shared))
                supply.setdefault(key, []).append((tuple(vals[p] for p in pos_new), count))
        for key, members in groups.items():
            offered = supply.get(key, [])
            if sum(c for _, c in offered) != len(members):
                raise ConsistencyError(f"table on {table.dimensions} cannot cover record group {key}")
            it = iter(members)
            for new_vals, count in offered:
                for _ in range(count):
                    next(it).update(zip(new, new_vals))
        assigned |= set(new)

    records = [
        PersonRecord(
            person_id=f"R{k:06d}",
            block_id=row["block_id"],
            **{a: row.get(a, fill[a]) for a in ATTRIBUTES},
        )
        for k, row in enumerate(rows)
    ]
    md = MicrodataSet(tuple(records), geography)
    for table in tables:
        got = tabulate(md, table.dimensions, table.geo_level)
        if any(got.cells.get(k, 0) != v for k, v in table.cells.items()) or any(
            v and k not in table.cells for k, v in got.cells.items()
        ):
            raise ConsistencyError(
                f"greedy regeneration could not satisfy table {table.dimensions}; the table set is not decomposable"
            )

    mult = None
    total_cells = sum(len(t) for t in tables)
    if len(rows) <= max_population and total_cells <= max_cells:
        mult = count_consistent_microdata(tables, geography)
    return RegenerationResult(md, mult)


def count_consistent_microdata(tables: Sequence[FrequencyTable], geography: Geography) -> int:
    """Number of distinct unordered microdata sets matching every table.

    An unordered microdata set is a non-negative integer count for each
    (block, joint attribute tuple) pair; this enumerates those count vectors
    depth-first and prunes on table cells that are already over-full.
    """
    dims: list[str] = []
    for t in tables:
        dims.extend(d for d in t.dimensions if d not in dims)
    domains = []
    for d in dims:
        vals = set()
        for t in tables:
            if d in t.dimensions:
                vals.update(t.domain(d))
        domains.append(sorted(vals, key=str))
    blocks = sorted({g for t in _block_level_tables(tables) for g in t.geo_codes})
    variables = [(b, tup) for b in blocks for tup in itertools.product(*domains)]

    constraints: list[tuple[int, list[int]]] = []
    for t in tables:
        pos = [dims.index(d) for d in t.dimensions]
        members: dict[tuple, list[int]] = {key: [] for key in t.cells}
        for v, (b, tup) in enumerate(variables):
            key = (geography.code(b, t.geo_level), tuple(tup[p] for p in pos))
            if key in members:
                members[key].append(v)
            else:
                # value combination absent from this table: forced to zero
                members.setdefault(("__zero__", key), []).append(v)
        for key, vs in members.items():
            target = 0 if key[0] == "__zero__" else t.cells[key]
            constraints.append((target, vs))

    var_cons: list[list[int]] = [[] for _ in variables]
    for ci, (_, vs) in enumerate(constraints):
        for v in vs:
            var_cons[v].append(ci)
    remaining = [target for target, _ in constraints]
    # last variable index in each constraint: it must close the constraint exactly
    last_of = [max(vs) if vs else -1 for _, vs in constraints]
    for ci, (target, vs) in enumerate(constraints):
        if not vs and target:
            return 0

    def dfs(v: int) -> int:
        if v == len(variables):
            return int(all(r == 0 for r in remaining))
        cons = var_cons[v]
        hi = min(remaining[c] for c in cons) if cons else 0
        lo = 0
        for c in cons:
            if last_of[c] == v:
                lo = max(lo, remaining[c])
        total = 0
        for k in range(lo, hi + 1):
            for c in cons:
                remaining[c] -= k
            total += dfs(v + 1)
            for c in cons:
                remaining[c] += k
        return total

    return dfs(0)
