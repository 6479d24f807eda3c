import math

import numpy as np
import pytest
from scipy import special

from varstop import gbm, jacobi, logit_scale, randomized_example, tabulated_scale
from varstop.builtins import jacobi_exponents
from varstop.errors import DomainError, NonMonotoneScale
from varstop.solver import solve


def test_gbm_scale_is_power():
    spec = gbm(-1.0, 1.0)
    x = np.array([0.5, 1.0, 3.0])
    ratios = spec.S(x) / x**3
    assert np.allclose(ratios, ratios[0], rtol=1e-12)


def test_gbm_drift_and_vol():
    spec = gbm(-1.0, 0.5)
    assert spec.drift(2.0) == pytest.approx(-2.0)
    assert spec.vol(2.0) == pytest.approx(1.0)


@pytest.mark.parametrize("a, b, sigma", [(0.02, 0.038, 0.26), (0.05, 0.08, 0.4)])
def test_jacobi_scale_matches_incomplete_beta(a, b, sigma):
    spec = jacobi(a, b, sigma)
    B, A = jacobi_exponents(a, b, sigma)
    p, q = -B, -A  # beta parameters
    xs = np.array([1e-4, 0.1, 0.43, 0.9, 1 - 1e-6])
    ref = special.betainc(p, q, xs) * special.beta(p, q)
    assert np.allclose(spec.S(xs), ref, rtol=1e-10)
    assert spec.s_beta == pytest.approx(special.beta(p, q), rel=1e-12)


def test_jacobi_rejects_non_integrable():
    with pytest.raises(DomainError):
        jacobi(0.5, 0.6, 0.1)


def test_logit_drift_makes_scale_natural():
    spec = logit_scale(0.0, 1.0)
    x = 0.3
    # generator on S: mu S' + 0.5 sigma^2 S'' = 0
    h = 1e-5
    s1 = (spec.S(x + h) - spec.S(x - h)) / (2 * h)
    s2 = (spec.S(x + h) - 2 * spec.S(x) + spec.S(x - h)) / h**2
    assert spec.drift(x) * s1 + 0.5 * spec.vol(x) ** 2 * s2 == pytest.approx(0.0, abs=1e-4)


def test_example_scale_pieces():
    spec = randomized_example()
    assert spec.S(1.0) == pytest.approx(0.25)
    assert spec.S(2.0) == pytest.approx(0.5)
    assert spec.S(2.1) == pytest.approx((2.1**2 - 3.15) / 1.01)
    assert spec.S(12.0) == pytest.approx(63.0)
    assert spec.S(1.5) == pytest.approx(0.375)


def test_example_literal_form_is_rejected():
    with pytest.raises(NonMonotoneScale):
        solve(randomized_example(verbatim=True), 1.0)


def test_tabulated_scale():
    xs = np.linspace(0.0, 1.0, 21)
    spec = tabulated_scale(xs, xs**2 + xs, 0.0, 1.0)
    assert spec.S(0.5) == pytest.approx(0.75, rel=1e-3)
    with pytest.raises(DomainError):
        tabulated_scale(xs, -xs, 0.0, 1.0)
    assert math.isfinite(spec.s_beta)
