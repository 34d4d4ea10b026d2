import math

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import integrate

from rrgen.chi2 import Chi2Params, chi2_cdf, chi2_inv, chi2_pdf, chi2_sf, threshold_for


def density(x, k):
    # written independently of the implementation under test
    return x ** (k / 2 - 1) * math.exp(-x / 2) / (2 ** (k / 2) * math.gamma(k / 2))


def quad_cdf(x, k):
    val, _ = integrate.quad(density, 0, x, args=(k,), epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def test_cdf_zero():
    assert chi2_cdf(0.0, 5) == 0.0


def test_cdf_closed_form_two_dof():
    assert chi2_cdf(2 * math.log(2), 2) == pytest.approx(0.5, abs=1e-14)
    for x in (0.1, 1.0, 7.5, 40.0):
        assert chi2_cdf(x, 2) == pytest.approx(1 - math.exp(-x / 2), rel=1e-13)


def test_cdf_at_reference_threshold():
    assert abs(quad_cdf(38.582, 19) - 0.995) < 1e-4
    assert chi2_cdf(38.582, 19) == pytest.approx(quad_cdf(38.582, 19), abs=1e-10)


@pytest.mark.parametrize("k", [1, 3, 9, 19, 40])
@pytest.mark.parametrize("x", [0.5, 4.0, 20.0, 60.0])
def test_cdf_matches_quadrature(x, k):
    assert chi2_cdf(x, k) == pytest.approx(quad_cdf(x, k), abs=1e-9)


def test_cdf_negative_rejected():
    with pytest.raises(ValueError):
        chi2_cdf(-1.0, 3)


def test_sf_complements_cdf():
    for k in (1, 4, 19):
        for x in (0.3, 5.0, 30.0):
            assert chi2_cdf(x, k) + chi2_sf(x, k) == pytest.approx(1.0, abs=1e-15)


def test_inv_reference_threshold():
    assert chi2_inv(0.995, 19) == pytest.approx(38.58, abs=0.01)


def test_inv_closed_form():
    assert chi2_inv(0.5, 2) == pytest.approx(2 * math.log(2), rel=1e-12)


def test_inv_zero():
    assert chi2_inv(0.0, 7) == 0.0


@pytest.mark.parametrize("p", [-0.1, 1.0, 1.5])
def test_inv_domain(p):
    with pytest.raises(ValueError):
        chi2_inv(p, 3)


def test_inv_accuracy_in_probability():
    for k in (1, 2, 9, 19, 100, 5000):
        for p in (1e-6, 0.01, 0.5, 0.9, 0.995, 0.999999):
            assert abs(chi2_cdf(chi2_inv(p, k), k) - p) <= 1e-8


def test_dof_cap():
    with pytest.raises(ValueError):
        chi2_cdf(1.0, 10**6 + 1)
    assert chi2_inv(0.5, 10**6) == pytest.approx(10**6, rel=1e-3)


def test_threshold_reference():
    assert threshold_for(Chi2Params(19, 0.005)) == pytest.approx(38.58, abs=0.01)


def test_threshold_round_trip_nine_dof():
    v = threshold_for(Chi2Params(9, 0.005))
    assert abs(chi2_cdf(v, 9) - 0.995) <= 1e-6


def test_threshold_vanishes_as_alpha_to_one():
    values = [threshold_for(Chi2Params(5, a)) for a in (0.9, 0.999, 1 - 1e-9)]
    assert values[0] > values[1] > values[2]
    assert values[2] < 1e-3


def test_params_validation():
    with pytest.raises(ValueError):
        Chi2Params(0, 0.1)
    with pytest.raises(ValueError):
        Chi2Params(3, 1.0)


@given(st.floats(0.1, 200.0), st.integers(1, 64))
def test_round_trip(x, k):
    p = chi2_cdf(x, k)
    # outside this band the probability itself has no digits left to invert
    assume(1e-300 < p < 1 - 1e-8)
    assert chi2_inv(p, k) == pytest.approx(x, rel=1e-6)


@given(st.floats(0.01, 150.0), st.floats(1e-6, 10.0), st.integers(1, 64))
def test_strictly_increasing(x, dx, k):
    lo, hi = chi2_cdf(x, k), chi2_cdf(x + dx, k)
    assert hi >= lo
    # whichever tail still resolves the step must show it
    assert hi > lo or chi2_sf(x + dx, k) < chi2_sf(x, k)


@pytest.mark.parametrize("k", [1, 2, 5, 19, 50])
def test_mean_equals_dof(k):
    parts = [(0, 1), (1, k + 1), (k + 1, 20 * k + 200)]
    mean = sum(integrate.quad(lambda x: x * chi2_pdf(x, k), a, b, epsabs=1e-12, epsrel=1e-12,
                              limit=400)[0] for a, b in parts)
    assert mean == pytest.approx(k, abs=1e-6)
