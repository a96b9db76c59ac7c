from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dani.numerics import KeyedExactSum, exact_group_sum, group_keys, keyed_sum

finite_nonneg = st.floats(min_value=0.0, max_value=1e300, allow_nan=False, allow_infinity=False).filter(
    lambda x: x == 0 or x > 1e-300
)


def exact(values):
    return float(sum(map(Fraction, values), Fraction(0)))


def test_classic_rounding_case():
    assert exact_group_sum(np.zeros(2, dtype=np.int64), np.array([0.1, 0.2]), 1)[0] == 0.1 + 0.2


def test_cancellation_free_large_small_mix():
    values = np.array([1e16, 1.0, 1.0, -0.0 + 0.0])
    assert exact_group_sum(np.zeros(4, dtype=np.int64), values, 1)[0] == 1.0000000000000002e16


def test_ties_round_to_even():
    one = np.zeros(2, dtype=np.int64)
    assert exact_group_sum(one, np.array([1.0, 2.0**-53]), 1)[0] == 1.0
    assert exact_group_sum(one, np.array([1.0 + 2.0**-52, 2.0**-53]), 1)[0] == 1.0 + 2.0**-51


def test_empty_groups_are_zero():
    out = exact_group_sum(np.array([2]), np.array([3.5]), 4)
    assert out.tolist() == [0.0, 0.0, 3.5, 0.0]


@pytest.mark.parametrize("bad", [-1.0, np.inf, np.nan])
def test_rejects_bad_values(bad):
    with pytest.raises(ValueError):
        exact_group_sum(np.zeros(1, dtype=np.int64), np.array([bad]), 1)


@given(st.lists(st.tuples(st.integers(0, 4), finite_nonneg), min_size=1, max_size=60))
def test_matches_rational_sum(pairs):
    groups = np.array([g for g, _ in pairs], dtype=np.int64)
    values = np.array([v for _, v in pairs])
    out = exact_group_sum(groups, values, 5)
    for g in range(5):
        assert out[g] == exact(values[groups == g].tolist())


@given(st.lists(st.tuples(st.integers(0, 6), finite_nonneg), min_size=1, max_size=80), st.randoms(use_true_random=False))
def test_streaming_equals_batch(pairs, rnd):
    keys = np.array([k for k, _ in pairs], dtype=np.int64)
    values = np.array([v for _, v in pairs])
    unique, sums, counts = keyed_sum(keys, values, 7)
    idx = list(range(len(pairs)))
    rnd.shuffle(idx)
    acc = KeyedExactSum(7, flush_size=rnd.randint(1, 10))
    cuts = sorted(rnd.randint(0, len(idx)) for _ in range(3))
    for lo, hi in zip([0, *cuts], [*cuts, len(idx)]):
        part = idx[lo:hi]
        acc.add(keys[part], values[part])
    u2, s2, c2 = acc.result()
    assert np.array_equal(unique, u2)
    assert sums.tobytes() == s2.tobytes()
    assert np.array_equal(counts, c2)


def test_group_keys_dense_and_sparse_agree():
    keys = np.array([9, 3, 9, 0, 3, 3], dtype=np.int64)
    dense = group_keys(keys, 10)
    sparse = group_keys(keys, 1 << 40)
    for (u, inv) in (dense, sparse):
        assert u.tolist() == [0, 3, 9]
        assert np.array_equal(u[inv], keys)


def test_keyed_sum_counts():
    unique, sums, counts = keyed_sum(np.array([5, 5, 1]), np.array([0.5, 0.25, 2.0]), 8)
    assert unique.tolist() == [1, 5]
    assert sums.tolist() == [2.0, 0.75]
    assert counts.tolist() == [1, 2]
