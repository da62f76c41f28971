import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reconlab.core import (
    BinaryDatabase,
    SubsetQuery,
    enumerate_all_queries,
    query_matrix,
    sample_random_queries,
    true_answers,
    true_count,
)
from reconlab.exceptions import CapacityError, ParameterError, QueryRangeError


def test_true_count_direct_sum():
    assert true_count(BinaryDatabase([1, 0, 1, 1]), SubsetQuery({0, 2, 3})) == 3


def test_true_count_all_zero():
    assert true_count(BinaryDatabase([0, 0, 0, 0]), SubsetQuery({0, 1, 2, 3})) == 0


def test_true_count_full_query_is_popcount():
    db = BinaryDatabase.random(64, np.random.default_rng(7))
    # popcount via Python's int, independent of numpy summation
    as_int = int("".join(str(int(b)) for b in db.bits), 2)
    assert true_count(db, SubsetQuery(range(64))) == bin(as_int).count("1")


def test_true_count_out_of_range():
    with pytest.raises(QueryRangeError):
        true_count(BinaryDatabase([1, 0]), SubsetQuery({2}))
    with pytest.raises(IndexError):
        true_count(BinaryDatabase([1, 0]), SubsetQuery({-1}))


def test_database_rejects_non_bits():
    with pytest.raises(ParameterError):
        BinaryDatabase([0, 2])


def test_database_is_read_only():
    db = BinaryDatabase([1, 0])
    with pytest.raises(ValueError):
        db.bits[0] = 0


def test_enumerate_n2_power_set():
    got = {q.indices for q in enumerate_all_queries(2)}
    assert got == {frozenset(), frozenset({0}), frozenset({1}), frozenset({0, 1})}


def test_enumerate_n4_has_16():
    assert len({q.indices for q in enumerate_all_queries(4)}) == 16


def test_enumerate_n10_no_duplicates():
    qs = [q.indices for q in enumerate_all_queries(10)]
    assert len(qs) == 1024 == len(set(qs))


@pytest.mark.parametrize("n", range(0, 13))
def test_enumerate_cardinality(n):
    qs = [q.indices for q in enumerate_all_queries(n)]
    assert len(qs) == 2**n == len(set(qs))


def test_enumerate_capacity_guard():
    with pytest.raises(CapacityError, match="20"):
        list(enumerate_all_queries(21))


def test_sample_deterministic():
    a = sample_random_queries(8, 3, np.random.default_rng(1))
    b = sample_random_queries(8, 3, np.random.default_rng(1))
    assert a == b


def test_sample_subset_size_binomial():
    q = sample_random_queries(1000, 1, np.random.default_rng(3))[0]
    assert abs(len(q.indices) - 500) <= 79


def test_sample_inclusion_rate_over_many():
    qs = sample_random_queries(50, 2000, np.random.default_rng(5))
    M = query_matrix(qs, 50)
    # each index ~ Bernoulli(1/2) over 2000 draws: 5 sigma is about 0.056
    assert np.all(np.abs(M.mean(axis=0) - 0.5) < 0.056)


def test_sample_m_zero_rejected():
    with pytest.raises(ParameterError):
        sample_random_queries(8, 0, np.random.default_rng(1))


def test_true_answers_matches_loop():
    rng = np.random.default_rng(11)
    db = BinaryDatabase.random(30, rng)
    qs = sample_random_queries(30, 40, rng)
    assert list(true_answers(db, qs)) == [sum(int(db.bits[i]) for i in q.indices) for q in qs]


@settings(max_examples=60, deadline=None)
@given(bits=st.lists(st.integers(0, 1), min_size=1, max_size=40), data=st.data())
def test_true_count_bounds(bits, data):
    idx = data.draw(st.sets(st.integers(0, len(bits) - 1)))
    c = true_count(BinaryDatabase(bits), SubsetQuery(idx))
    assert 0 <= c <= len(idx)
    assert c == sum(bits[i] for i in idx)


def test_query_matrix_rows_match_indices():
    qs = [SubsetQuery(s) for s in itertools.combinations(range(5), 2)]
    M = query_matrix(qs, 5)
    for row, q in zip(M, qs):
        assert set(np.flatnonzero(row)) == set(q.indices)
