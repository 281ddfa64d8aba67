from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rosenhurst.filters import (
    FilterError,
    custom_filter,
    daubechies_filter,
    finite_difference_filter,
    parse_filter,
    partial_sums,
    validate_filter,
)

# db:2 from the closed form (1 +- sqrt3, 3 +- sqrt3) / (4 sqrt2), high-pass ordering
DB2 = [-0.12940952255126038117, -0.22414386804201338103, 0.83651630373780790558, -0.48296291314453414337]
# standard db:3 low-pass taps
DB3_LOW = [0.3326705529500826, 0.8068915093110925, 0.4598775021184915,
           -0.1350110200102546, -0.0854412738820267, 0.0352262918857095]


def test_fd2_taps():
    f = finite_difference_filter(2)
    assert f.exact == (-1, 2, -1)
    assert f.order == 2 and f.length == 2 and f.label == "fd:2"


def test_fd1_warns():
    with pytest.warns(UserWarning):
        f = finite_difference_filter(1)
    assert f.order == 1


@pytest.mark.parametrize("ell", range(1, 16))
def test_fd_leading_moment_is_factorial(ell):
    with _nullwarn():
        f = finite_difference_filter(ell)
    m = sum(a * q**ell for q, a in enumerate(f.exact))
    assert abs(m) == factorial(ell)
    assert all(sum(a * q**r for q, a in enumerate(f.exact)) == 0 for r in range(ell))


def _nullwarn():
    import contextlib
    import warnings

    @contextlib.contextmanager
    def cm():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            yield

    return cm()


def test_db2_matches_closed_form():
    f = daubechies_filter(2)
    np.testing.assert_allclose(f.coeffs, DB2, atol=1e-15)


def test_db3_matches_tabulated_lowpass():
    g = daubechies_filter(3).coeffs
    low = np.array([(-1) ** k * g[len(g) - 1 - k] for k in range(len(g))])
    if low.sum() < 0:
        low = -low
    np.testing.assert_allclose(low, DB3_LOW, atol=1e-13)


@pytest.mark.parametrize("p", [2, 4, 7, 10, 15, 20])
def test_daubechies_order_and_energy(p):
    f = daubechies_filter(p)
    assert f.order == p and f.length == 2 * p - 1
    assert np.dot(f.coeffs, f.coeffs) == pytest.approx(1.0, abs=1e-13)
    _, diag = validate_filter(f.coeffs)
    assert diag["residual"] < 1e-10


@pytest.mark.parametrize("p", [1, 21])
def test_daubechies_range(p):
    with pytest.raises(FilterError):
        daubechies_filter(p)


@pytest.mark.parametrize("bad", [[1.0], [1.0, 1.0], [0.0, 0.0, 0.0], [1.0, np.nan, -1.0]])
def test_invalid_coefficients(bad):
    with pytest.raises(FilterError):
        validate_filter(bad)


def test_custom_filter_order():
    f = custom_filter([1.0, -3.0, 3.0, -1.0])
    assert f.order == 3 and f.kind == "custom"


def test_parse_filter():
    assert parse_filter("fd:3").exact == (-1, 3, -3, 1)
    assert parse_filter("db:4").order == 4
    assert parse_filter(" custom:1,-2,1 ").order == 2
    for bad in ("xx:2", "fd:0", "db:x", "custom:1,1"):
        with pytest.raises(FilterError):
            parse_filter(bad)


def test_partial_sums_end_at_zero():
    b = partial_sums(finite_difference_filter(3)).b
    np.testing.assert_array_equal(b, [-1.0, 2.0, -1.0, 0.0])


def test_negated_filter_keeps_order():
    f = -daubechies_filter(3)
    assert f.order == 3
    np.testing.assert_array_equal(f.coeffs, -daubechies_filter(3).coeffs)


@given(st.integers(1, 12), st.floats(0.1, 10.0))
def test_scaling_preserves_order(ell, s):
    with _nullwarn():
        f = finite_difference_filter(ell)
    p, _ = validate_filter(s * f.coeffs)
    assert p == ell


@given(st.integers(1, 8), st.lists(st.integers(-4, 4), min_size=1, max_size=5).filter(lambda r: sum(r) != 0))
def test_smoothing_keeps_order(ell, r):
    # (1 - z)^ell r(z) vanishes to order exactly ell at z = 1 when r(1) != 0
    with _nullwarn():
        f = finite_difference_filter(ell)
    p, _ = validate_filter(np.convolve(f.coeffs, np.array(r, dtype=float)))
    assert p == ell


def test_binomial_taps_match_comb():
    f = finite_difference_filter(6)
    assert [abs(a) for a in f.exact] == [comb(6, k) for k in range(7)]
