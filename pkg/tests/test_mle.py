import random

import pytest
from hypothesis import given, settings, strategies as st

from zklora.field import TEST_MODULUS as P
from zklora.mle import (
    DenseMultilinear,
    DimensionMismatch,
    FoldOnConstant,
    eq_eval,
    eq_table,
    mle_evaluate,
    mle_from_tensor,
    zero_prefix_eval,
)
from zklora.quantize import QuantParams, QuantizedTensor

PARAMS = QuantParams(gamma_fp=2**8, bound=2**12, zeta=2**8, xi=2**24, radices=(2**8,) * 3)


def direct_mle_eval(table, point, p):
    """Oracle: explicit basis-expansion sum over every boolean assignment."""
    n = len(point)
    total = 0
    for idx in range(len(table)):
        term = table[idx]
        for bit_pos in range(n):
            bit = (idx >> (n - 1 - bit_pos)) & 1
            x = point[bit_pos]
            term = term * ((x if bit else (1 - x)) % p) % p
        total = (total + term) % p
    return total


def test_single_variable_boolean_point():
    assert mle_evaluate([5, 9], [0], P) == 5
    assert mle_evaluate([5, 9], [1], P) == 9


def test_single_variable_closed_form():
    rng = random.Random(1)
    for _ in range(20):
        a, b, r = (rng.randrange(P) for _ in range(3))
        assert mle_evaluate([a, b], [r], P) == (a * (1 - r) + b * r) % P


def test_three_variable_random_matches_direct_sum():
    rng = random.Random(2)
    for _ in range(50):
        table = [rng.randrange(P) for _ in range(8)]
        point = [rng.randrange(P) for _ in range(3)]
        assert mle_evaluate(table, point, P) == direct_mle_eval(table, point, P)


@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0))
@settings(max_examples=100)
def test_boolean_points_recover_table(n, seed):
    rng = random.Random(seed)
    table = [rng.randrange(P) for _ in range(1 << n)]
    for idx in range(1 << n):
        point = [(idx >> (n - 1 - i)) & 1 for i in range(n)]
        assert mle_evaluate(table, point, P) == table[idx]


def test_tensor_trivial_cases():
    one = QuantizedTensor.from_field(1, 1, [7], PARAMS, P)
    f = mle_from_tensor(one)
    assert f.num_vars == 0 and f.evaluate([]) == 7

    eye = QuantizedTensor.from_field(2, 2, [1, 0, 0, 1], PARAMS, P)
    assert mle_from_tensor(eye).table == [1, 0, 0, 1]


def test_tensor_rows_before_columns():
    rng = random.Random(3)
    entries = [rng.randrange(256) for _ in range(8)]
    t = QuantizedTensor.from_field(2, 4, entries, PARAMS, P)
    f = mle_from_tensor(t)
    assert f.num_vars == 3
    for i in range(2):
        for j in range(4):
            point = [i, (j >> 1) & 1, j & 1]
            assert f.evaluate(point) == t.entry(i, j)


def test_fold_trivials():
    assert DenseMultilinear([3, 8], P).fold(1).table == [8]
    assert DenseMultilinear([1, 2, 3, 4], P).fold(0).table == [1, 2]


def test_fold_then_evaluate_matches_prepended_point():
    rng = random.Random(4)
    for _ in range(100):
        n = rng.randrange(1, 7)
        table = [rng.randrange(P) for _ in range(1 << n)]
        r = rng.randrange(P)
        rest = [rng.randrange(P) for _ in range(n - 1)]
        f = DenseMultilinear(table, P)
        assert f.fold(r).evaluate(rest) == f.evaluate([r] + rest)


def test_fold_on_constant_raises():
    with pytest.raises(FoldOnConstant):
        DenseMultilinear([5], P).fold(3)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        DenseMultilinear([1, 2], P).evaluate([1, 2])


def test_multilinearity_three_point_collinearity():
    rng = random.Random(5)
    n = 5
    table = [rng.randrange(P) for _ in range(1 << n)]
    f = DenseMultilinear(table, P)
    for var in range(n):
        others = [rng.randrange(P) for _ in range(n)]

        def at(x):
            pt = list(others)
            pt[var] = x
            return f.evaluate(pt)

        # degree <= 1: f(2) - 2 f(1) + f(0) == 0
        assert (at(2) - 2 * at(1) + at(0)) % P == 0


def test_eq_table_matches_pointwise_kernel():
    rng = random.Random(6)
    point = [rng.randrange(P) for _ in range(4)]
    tab = eq_table(point, P)
    for idx in range(16):
        bits = [(idx >> (3 - i)) & 1 for i in range(4)]
        assert tab[idx] == eq_eval(point, bits, P)
    # partition of unity
    assert sum(tab) % P == 1


def test_zero_prefix_eval():
    rng = random.Random(7)
    point = [rng.randrange(P) for _ in range(5)]
    indicator = [0] * 32
    for idx in range(8):
        indicator[idx] = 1  # first three variables zero
    expect = mle_evaluate(indicator, point, P)
    assert zero_prefix_eval(point, 2, P) == expect
