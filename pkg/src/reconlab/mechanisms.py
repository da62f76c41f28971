"""Output-protection mechanisms and privacy accounting.

Covers bounded output perturbation of subset-sum answers, the Laplace
mechanism with a sequential-composition ledger, binary randomized response,
and the conversions used to compare frameworks: RR probability from epsilon,
zCDP rho to epsilon at a fixed delta, and ratios of e^epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from reconlab.core import BinaryDatabase, QueryAnswer, SubsetQuery, true_answers, true_count
from reconlab.exceptions import BudgetExhaustedError, ParameterError

# Relative slack for floating-point budget sums (1000 * (eps/1000) may exceed eps by an ulp).
BUDGET_RTOL = 1e-9


class NoiseDistribution(str, Enum):
    UNIFORM_CONTINUOUS = "uniform_continuous"
    UNIFORM_INTEGER = "uniform_integer"
    # every query answered from one copy of the data with floor(B) bits flipped;
    # the error is correlated across queries but still bounded by B
    MASKED_COPY = "masked_copy"


@dataclass(frozen=True)
class BoundedNoiseMechanism:
    """Adds noise supported on ``[-B, B]``."""

    B: float
    distribution: NoiseDistribution = NoiseDistribution.UNIFORM_CONTINUOUS

    def __post_init__(self):
        if self.B < 0 or not math.isfinite(self.B):
            raise ParameterError("B must be a finite non-negative number")
        object.__setattr__(self, "distribution", NoiseDistribution(self.distribution))
        if self.distribution is NoiseDistribution.UNIFORM_INTEGER and self.B != int(self.B):
            raise ParameterError("integer noise needs an integral bound B")

    def sample(self, rng: np.random.Generator, size=None):
        """Independent noise draws (not available for the masked-copy law)."""
        if self.B == 0:
            return np.zeros(size) if size is not None else 0.0
        if self.distribution is NoiseDistribution.MASKED_COPY:
            raise ParameterError("masked-copy noise depends on the data; use answer_bounded_batch")
        if self.distribution is NoiseDistribution.UNIFORM_INTEGER:
            b = int(self.B)
            return rng.integers(-b, b + 1, size=size).astype(float)
        return rng.uniform(-self.B, self.B, size=size)


@dataclass(frozen=True)
class LaplaceMechanism:
    epsilon: float
    sensitivity: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        if not self.sensitivity > 0:
            raise ParameterError("sensitivity must be positive")

    @property
    def scale(self) -> float:
        return self.sensitivity / self.epsilon

    @property
    def std(self) -> float:
        return math.sqrt(2.0) * self.scale

    def sample(self, rng: np.random.Generator, size=None):
        return laplace_noise(self.scale, rng, size)


def laplace_noise(scale: float, rng: np.random.Generator, size=None):
    """Inverse-CDF Laplace draws, one uniform per sample."""
    u = rng.random(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


@dataclass
class PrivacyAccountant:
    """Sequential-composition ledger. Refuses any charge that would overrun the budget."""

    total_budget: float
    ledger: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.total_budget > 0:
            raise ParameterError("total_budget must be positive")

    @property
    def spent(self) -> float:
        return compose([e for _, e in self.ledger])

    @property
    def remaining(self) -> float:
        return max(self.total_budget - self.spent, 0.0)

    def can_spend(self, epsilon: float) -> bool:
        return self.spent + epsilon <= self.total_budget * (1 + BUDGET_RTOL)

    def charge(self, query_id: int, epsilon: float) -> None:
        if not epsilon > 0:
            raise ParameterError("epsilon charges must be positive")
        if not self.can_spend(epsilon):
            raise BudgetExhaustedError(
                f"query {query_id} needs epsilon={epsilon:g} but only {self.remaining:g} "
                f"of {self.total_budget:g} remains"
            )
        self.ledger.append((int(query_id), float(epsilon)))

    def to_records(self) -> list[dict]:
        return [{"query_id": q, "epsilon": e} for q, e in self.ledger]


@dataclass(frozen=True)
class RandomizedResponse:
    p: float

    def __post_init__(self):
        if not 0.5 <= self.p <= 1.0:
            raise ParameterError("p must lie in [0.5, 1]")

    @property
    def epsilon(self) -> float:
        return math.inf if self.p == 1 else math.log(self.p / (1 - self.p))


@dataclass(frozen=True)
class ZcdpParams:
    rho: float
    delta: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ParameterError("rho must be positive")
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")


def answer_bounded(
    db: BinaryDatabase,
    q: SubsetQuery,
    mech: BoundedNoiseMechanism,
    rng: np.random.Generator,
    query_id: int = 0,
) -> QueryAnswer:
    if mech.distribution is NoiseDistribution.MASKED_COPY:
        return QueryAnswer(answer_bounded_batch(db, [q], mech, rng)[0].value, query_id)
    return QueryAnswer(true_count(db, q) + float(mech.sample(rng)), query_id)


def masked_copy(db: BinaryDatabase, flips: int, rng: np.random.Generator) -> BinaryDatabase:
    """Copy of ``db`` with ``flips`` distinct positions inverted."""
    flips = min(int(flips), db.n)
    bits = db.bits.copy()
    idx = rng.choice(db.n, size=flips, replace=False)
    bits[idx] = 1 - bits[idx]
    return BinaryDatabase(bits)


def answer_bounded_batch(
    db: BinaryDatabase,
    queries: Sequence[SubsetQuery],
    mech: BoundedNoiseMechanism,
    rng: np.random.Generator,
) -> list[QueryAnswer]:
    """Answer a whole query list; ``query_id`` is the list position."""
    if mech.distribution is NoiseDistribution.MASKED_COPY:
        source = masked_copy(db, int(math.floor(mech.B)), rng)
        values = true_answers(source, queries).astype(float)
    else:
        values = true_answers(db, queries) + mech.sample(rng, len(queries))
    return [QueryAnswer(float(v), k) for k, v in enumerate(values)]


def answer_laplace(
    db: BinaryDatabase,
    q: SubsetQuery,
    mech: LaplaceMechanism,
    accountant: PrivacyAccountant,
    rng: np.random.Generator,
    query_id: int = 0,
) -> QueryAnswer:
    """Charge ``mech.epsilon`` to the accountant, then answer with Laplace noise.

    Raises:
        BudgetExhaustedError: the charge would overrun the budget. Nothing is
            answered and the ledger is left untouched.
    """
    count = true_count(db, q)
    accountant.charge(query_id, mech.epsilon)
    return QueryAnswer(count + float(mech.sample(rng)), query_id)


def compose(epsilons) -> float:
    eps = list(epsilons)
    for e in eps:
        if not e > 0:
            raise ParameterError(f"composition entries must be positive, got {e}")
    return math.fsum(eps)


def split_budget(total_epsilon: float, m: int) -> float:
    """Per-query share when ``m`` overlapping queries split one budget."""
    if m < 1:
        raise ParameterError("m must be >= 1")
    return total_epsilon / m


def laplace_tail(epsilon: float, bound: float) -> float:
    """P(|X| <= bound) for X ~ Laplace(scale=1/epsilon)."""
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    if bound < 0:
        raise ParameterError("bound must be non-negative")
    return -math.expm1(-epsilon * bound)


def rr_flip(bit: int, rr: RandomizedResponse, rng: np.random.Generator) -> int:
    if bit not in (0, 1):
        raise ParameterError("bit must be 0 or 1")
    return bit if rng.random() < rr.p else 1 - bit


def rr_flip_many(bits, rr: RandomizedResponse, rng: np.random.Generator) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int8)
    keep = rng.random(bits.shape) < rr.p
    return np.where(keep, bits, 1 - bits).astype(np.int8)


def rr_p_from_epsilon(epsilon: float) -> float:
    """Truthful-report probability of binary RR matching epsilon-DP: e^eps / (1 + e^eps)."""
    if epsilon < 0:
        raise ParameterError("epsilon must be non-negative")
    # logistic form stays finite for large epsilon
    return 1.0 / (1.0 + math.exp(-epsilon))


def rr_estimate_proportion(randomized_bits, p: float) -> float:
    """Invert RR: (observed_mean + p - 1) / (2p - 1), clamped to [0, 1]."""
    if p == 0.5:
        raise ParameterError("the RR estimator is undefined at p = 0.5")
    if not 0.5 < p <= 1:
        raise ParameterError("p must lie in (0.5, 1]")
    bits = np.asarray(randomized_bits)
    if bits.size == 0:
        raise ParameterError("no randomized bits supplied")
    raw = (float(bits.mean()) + p - 1.0) / (2.0 * p - 1.0)
    return min(max(raw, 0.0), 1.0)


def zcdp_to_epsilon(params: ZcdpParams) -> float:
    """Equivalent epsilon for rho-zCDP at fixed delta: rho + 2 sqrt(rho ln(1/delta))."""
    return params.rho + 2.0 * math.sqrt(params.rho * math.log(1.0 / params.delta))


def rho_for_epsilon(epsilon: float, delta: float, tol: float = 1e-12) -> float:
    """Bisection inverse of :func:`zcdp_to_epsilon` in rho."""
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    lo, hi = 0.0, max(epsilon, 1.0)
    while zcdp_to_epsilon(ZcdpParams(hi, delta)) < epsilon:
        hi *= 2
    while hi - lo > tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if mid > 0 and zcdp_to_epsilon(ZcdpParams(mid, delta)) < epsilon:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def privacy_ratio(eps_a: float, eps_b: float) -> float:
    """e^eps_a / e^eps_b, computed as exp(eps_a - eps_b)."""
    return math.exp(eps_a - eps_b)
