"""Binary databases and subset-count queries.

The target of every reconstruction attack is an n-bit string. Queries ask
"how many records in this subset are 1?"; the 0-count form is ``|q| - count``
and is not modeled separately.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from reconlab.exceptions import CapacityError, ParameterError, QueryRangeError

MAX_EXHAUSTIVE_N = 20


@dataclass(frozen=True)
class BinaryDatabase:
    """An immutable vector of 0/1 records."""

    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 1 or arr.size == 0:
            raise ParameterError("bits must be a non-empty 1-d vector")
        if not np.all((arr == 0) | (arr == 1)):
            raise ParameterError("every record must be exactly 0 or 1")
        arr = arr.astype(np.int8, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def n(self) -> int:
        return int(self.bits.size)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "BinaryDatabase":
        if n < 1:
            raise ParameterError("n must be >= 1")
        return cls(rng.integers(0, 2, size=n))

    def __eq__(self, other):
        if not isinstance(other, BinaryDatabase):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        shown = "".join(map(str, self.bits[:32].tolist()))
        tail = "..." if self.n > 32 else ""
        return f"BinaryDatabase(n={self.n}, bits={shown}{tail})"


@dataclass(frozen=True)
class SubsetQuery:
    """A set of record indices; the empty subset is allowed."""

    indices: frozenset[int]

    def __post_init__(self):
        idx = frozenset(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def validate(self, n: int) -> None:
        for i in self.indices:
            if i < 0 or i >= n:
                raise QueryRangeError(f"query index {i} outside [0, {n})")

    def mask(self, n: int) -> np.ndarray:
        self.validate(n)
        out = np.zeros(n, dtype=np.int8)
        if self.indices:
            out[list(self.indices)] = 1
        return out


@dataclass(frozen=True)
class QueryAnswer:
    """A (possibly perturbed) response; ``value - true count`` is the error."""

    value: float
    query_id: int


def true_count(db: BinaryDatabase, q: SubsetQuery) -> int:
    q.validate(db.n)
    if not q.indices:
        return 0
    return int(db.bits[list(q.indices)].sum())


def enumerate_all_queries(n: int) -> Iterator[SubsetQuery]:
    """Yield all 2**n subsets of ``range(n)`` exactly once, smallest first."""
    if n < 0:
        raise ParameterError("n must be non-negative")
    if n > MAX_EXHAUSTIVE_N:
        raise CapacityError(
            f"enumerate_all_queries is capped at n <= {MAX_EXHAUSTIVE_N} (got n={n})"
        )
    for size in range(n + 1):
        for combo in itertools.combinations(range(n), size):
            yield SubsetQuery(frozenset(combo))


def sample_random_queries(n: int, m: int, rng: np.random.Generator) -> list[SubsetQuery]:
    """Draw ``m`` subsets, each index included independently with probability 1/2."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    if m < 1:
        raise ParameterError("m must be >= 1")
    masks = rng.integers(0, 2, size=(m, n)).astype(bool)
    return [SubsetQuery(frozenset(np.flatnonzero(row).tolist())) for row in masks]


def query_matrix(queries: Sequence[SubsetQuery], n: int) -> np.ndarray:
    """Stack queries into an ``(m, n)`` 0/1 incidence matrix."""
    out = np.zeros((len(queries), n), dtype=np.int8)
    for k, q in enumerate(queries):
        q.validate(n)
        if q.indices:
            out[k, list(q.indices)] = 1
    return out


def true_answers(db: BinaryDatabase, queries: Sequence[SubsetQuery]) -> np.ndarray:
    return query_matrix(queries, db.n).astype(np.int64) @ db.bits.astype(np.int64)
