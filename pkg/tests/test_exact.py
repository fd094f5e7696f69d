from fractions import Fraction

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from condscan._exact import dd_box_sums, dd_prefix, exact_dot, exact_sum, two_prod, two_sum

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
# Products of these never underflow, which the error-free split needs.
scaled = finite.filter(lambda v: v == 0 or abs(v) >= 1e-100)


@given(finite, finite)
def test_two_sum_is_error_free(a, b):
    s, e = two_sum(a, b)
    assert Fraction(s) + Fraction(e) == Fraction(a) + Fraction(b)


@given(scaled, scaled)
def test_two_prod_is_error_free(a, b):
    p, e = two_prod(np.float64(a), np.float64(b))
    assert Fraction(float(p)) + Fraction(float(e)) == Fraction(a) * Fraction(b)


@given(st.lists(scaled, min_size=1, max_size=50), st.lists(scaled, min_size=1, max_size=50))
def test_exact_dot_is_correctly_rounded(a, b):
    k = min(len(a), len(b))
    a, b = np.array(a[:k]), np.array(b[:k])
    exact = sum((Fraction(u) * Fraction(v) for u, v in zip(a, b)), Fraction(0))
    assert exact_dot(a, b) == float(exact)


def test_exact_sum_survives_cancellation():
    values = [1e16, 1.0, -1e16, 1.0]
    assert exact_sum(values) == 2.0
    assert sum(values) != 2.0


def test_dd_prefix_matches_rational_prefix():
    rng = np.random.default_rng(4)
    arr = rng.normal(size=(5, 6)) * 10.0 ** rng.integers(-3, 8, size=(5, 6))
    hi, lo = dd_prefix(arr, axes=(0, 1))
    assert hi.shape == (6, 7)
    for i in range(6):
        for j in range(7):
            exact = sum((Fraction(v) for v in arr[:i, :j].ravel()), Fraction(0))
            assert abs(Fraction(hi[i, j]) + Fraction(lo[i, j]) - exact) <= abs(exact) * 2**-100 + 1e-300


def test_box_sum_is_relative_to_the_box_not_the_total():
    # A huge cell next to a tiny one: the tiny box must still come back exactly.
    arr = np.array([[1e15, 1e15], [1e15, 3.0 + 1e-3]])
    hi, lo = dd_prefix(arr, axes=(0, 1))
    out = dd_box_sums(hi, lo, np.array([[1, 1]]), np.array([[2, 2]]))
    assert out[0] == 3.0 + 1e-3


def test_box_sums_in_three_dimensions():
    rng = np.random.default_rng(9)
    cube = rng.random((3, 4, 5))
    hi, lo = dd_prefix(cube, axes=(0, 1, 2))
    starts = np.array([[0, 0, 0], [1, 2, 3], [2, 0, 1]])
    stops = np.array([[3, 4, 5], [2, 4, 5], [3, 1, 4]])
    got = dd_box_sums(hi, lo, starts, stops)
    for r in range(3):
        sl = tuple(slice(a, b) for a, b in zip(starts[r], stops[r]))
        assert np.isclose(got[r], cube[sl].sum(), rtol=1e-14)
