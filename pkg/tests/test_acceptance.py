"""Acceptance criteria 1-6. Each test carries a ``criterion`` marker for the summary."""

import math
import time

import numpy as np
import pytest
from scipy import special

from varstop import (
    ExitInterval,
    SampleConfig,
    ScaleLimits,
    classify,
    exit_mean,
    gbm,
    jacobi,
    logit_scale,
    natural_scale,
    randomized_example,
    piecewise_scale,
    sample_rule,
    solve,
    solve_game,
    value_profile,
)
from varstop.diffusion import scaled
from varstop.embedded import majorant, majorant_profile, maximizer_set, stopping_set
from varstop.rules import BernoulliMix, moments, rule_variance, thresholds
from varstop.solver import center_bound, scan_ties

crit = pytest.mark.criterion

# independent oracles -------------------------------------------------------

GBM_COEF = 3.0 * 4.0 ** (2.0 / 3.0) / 16.0


def gbm_boundary(x):
    return 4.0 ** (1.0 / 3.0) * x


def example_scale(x):
    """The piecewise scale written out directly from its pieces."""
    num = x * x - 1.5 * x
    if x < 2.0:
        return x / 4.0  # (x^2 - 1.5x) / (4x - 6) simplified
    if x < 2.1:
        return num / (21.8 - 9.9 * x)
    if x < 12.0:
        return num / (0.1 * x + 0.8)
    return num / (2.0 * math.exp(12.0 - x))


def jacobi_switch(a, b, sigma):
    """``S^{-1}(S(1)/2)``: the scale is a regularized incomplete beta function."""
    s2 = sigma * sigma
    # scale density y^(-2a/s2) (1-y)^(2(a-b)/s2)
    return float(special.betaincinv(1.0 - 2.0 * a / s2, 1.0 + 2.0 * (a - b) / s2, 0.5))


def rel(a, b):
    return abs(a - b) / abs(b)


# criterion 1 ---------------------------------------------------------------


@crit(1)
@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_gbm_closed_form(x):
    sol = solve(gbm(-1.0, 1.0), x)
    assert isinstance(sol.rule, ExitInterval) and sol.rule.a == 0.0
    assert rel(sol.rule.b, gbm_boundary(x)) <= 1e-8
    assert rel(sol.value, GBM_COEF * x * x) <= 1e-8


@crit(1)
def test_gbm_runtime():
    t0 = time.perf_counter()
    spec = gbm(-1.0, 1.0)
    for x in (0.5, 1.0, 2.0):
        solve(spec, x)
    assert time.perf_counter() - t0 < 1.0


# criterion 2 ---------------------------------------------------------------


@crit(2)
@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_marginal_value(x):
    sol = solve(gbm(-0.5, 1.0), x)
    assert rel(sol.value, x * x) <= 1e-10
    assert sol.rule.kind == "epsilon"


@crit(2)
def test_marginal_family_exact_variance():
    x = 2.0
    spec = gbm(-0.5, 1.0)
    sol = solve(spec, x)
    for eps in (0.5, 0.04, 1e-3):
        rule = sol.rule.at(eps)
        z = rule.b
        assert rule.a == 0.0
        var = rule_variance(spec, x, rule)
        # S(x) = x^2: P(hit Z) = x^2/Z^2, so Var = x^2 - x^4/Z^2
        assert rel(var, x * x - x**4 / z**2) <= 1e-12
        assert x * x - var <= eps * (1 + 1e-9)


@crit(2)
def test_marginal_sampled_variance():
    x = 2.0
    spec = gbm(-0.5, 1.0)
    rule = solve(spec, x).rule.at(0.04)
    z = rule.b
    assert abs(z - 20.0) < 1e-9
    est = sample_rule(spec, x, rule, SampleConfig(seed=2024, n=1_000_000))
    # the stated target x^2 - x^4/Z^4, and the exact two-point variance x^2 - x^4/Z^2
    assert abs(est.variance - (x * x - x**4 / z**4)) <= 3 * est.std_error_of_variance
    assert abs(est.variance - (x * x - x**4 / z**2)) <= 3 * est.std_error_of_variance


# criterion 3 ---------------------------------------------------------------


@crit(3)
def test_jacobi_switch():
    a, b, sigma = 0.02, 0.038, 0.26
    spec = jacobi(a, b, sigma)
    xs = np.linspace(0.01, 0.99, 200)
    sols = value_profile(spec, xs)
    lower = [s.x for s in sols if s.rule.a == 0.0 and s.rule.b < 1.0]
    upper = [s.x for s in sols if s.rule.a > 0.0 and s.rule.b == 1.0]
    assert len(lower) + len(upper) == xs.size
    assert max(lower) < min(upper)
    switch = 0.5 * (max(lower) + min(upper))
    step = xs[1] - xs[0]
    assert abs(switch - 0.43) <= 0.01
    assert abs(switch - jacobi_switch(a, b, sigma)) <= step
    assert all(classify(spec, x).tag == "CaseIII" for x in (0.1, 0.5, 0.9))


# criterion 4 ---------------------------------------------------------------


@crit(4)
def test_example_tie_and_region():
    spec = randomized_example()
    regions, _ = scan_ties(spec, center_bound(spec, 2.95))
    assert len(regions) == 1
    r = regions[0]
    assert abs(r.c - 0.75) <= 1e-8
    assert abs(r.z_lo - 2.0) <= 1e-6 and abs(r.z_hi - 12.0) <= 1e-6
    assert abs(r.x_lo - 0.75) <= 1e-6
    assert abs(r.x_hi - 2.958) <= 0.002
    assert abs(r.d_c[0] - 2.0) <= 1e-3 and abs(r.d_c[1] - 12.0) <= 1e-3
    lo, hi = stopping_set(spec, 0.75, 5.0)
    assert abs(lo - 2.0) <= 1e-3 and abs(hi - 12.0) <= 1e-3


@crit(4)
def test_example_exit_mean():
    spec = randomized_example()
    m = exit_mean(spec, 2.0, 0.0, 12.0)
    assert abs(m - 0.0952) <= 1e-4
    assert rel(m, 12.0 * example_scale(2.0) / example_scale(12.0)) <= 1e-12


@crit(4)
@pytest.mark.parametrize("x, p", [(1.0, 0.7375), (2.0, 0.34375)])
def test_example_mixing_weight(x, p):
    sol = solve(randomized_example(), x)
    assert sol.rule.kind == "mix"
    assert abs(sol.p_star - p) <= 1e-6
    assert thresholds(sol.rule) == (0.0, 2.0, 12.0)


@crit(4)
def test_example_value_formula():
    spec = randomized_example()
    xs = np.linspace(0.76, 2.95, 23)
    for x in xs:
        assert rel(solve(spec, x).value, 0.5625 + 2.0 * example_scale(x)) <= 1e-8


@crit(4)
def test_example_runtime():
    t0 = time.perf_counter()
    spec = randomized_example()
    for x in (0.5, 1.0, 2.0, 2.5, 2.9):
        solve(spec, x)
    assert time.perf_counter() - t0 < 10.0


# criterion 5 ---------------------------------------------------------------


@crit(5)
@pytest.mark.parametrize("which, x", [("gbm", 0.5), ("gbm", 1.0), ("gbm", 2.0),
                                      ("example", 0.5), ("example", 1.0), ("example", 2.0)])
def test_duality(which, x):
    spec = gbm(-1.0, 1.0) if which == "gbm" else randomized_example()
    primal = solve(spec, x)
    dual = solve_game(spec, x)
    assert rel(dual.value, primal.value) <= 1e-6
    edges = tuple(t for t in thresholds(primal.rule) if t != spec.alpha)
    assert len(dual.essential) == len(edges)
    assert all(abs(e - t) <= 1e-6 * max(1.0, t) for e, t in zip(dual.essential, edges))


# criterion 6 ---------------------------------------------------------------


def _dominance_specs():
    return [
        ("gbm", gbm(-1.0, 1.0), 1.0, 30.0),
        ("example", randomized_example(), 1.0, 30.0),
        ("jacobi", jacobi(0.02, 0.038, 0.26), 0.3, 1.0),
        ("natural", natural_scale(0.0, 1.0), 0.3, 1.0),
    ]


@crit(6)
@pytest.mark.parametrize("name, spec, x, b_hi", _dominance_specs(), ids=lambda v: v if isinstance(v, str) else "")
def test_dominance(name, spec, x, b_hi):
    rng = np.random.default_rng(17)
    v = solve(spec, x).value
    tol = 1e-9 * v

    def random_exit():
        a = rng.uniform(spec.alpha, x)
        b = rng.uniform(x, b_hi)
        return ExitInterval(a, b)

    for _ in range(1000):
        assert rule_variance(spec, x, random_exit()) <= v + tol
    for _ in range(100):
        r = BernoulliMix(rng.uniform(), random_exit(), random_exit())
        assert rule_variance(spec, x, r) <= v + tol


@crit(6)
@pytest.mark.parametrize("lam", [1e-3, 1.0, 1e3])
@pytest.mark.parametrize("which, x", [("gbm", 1.0), ("example", 1.0), ("example", 2.5)])
def test_scale_invariance(lam, which, x):
    base = gbm(-1.0, 1.0) if which == "gbm" else randomized_example()
    ref = solve(base, x)
    sol = solve(scaled(base, lam), x)
    assert rel(sol.value, ref.value) <= 1e-6
    assert np.allclose(thresholds(sol.rule), thresholds(ref.rule), rtol=1e-6, atol=0)


@crit(6)
@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_reflection_coherence(x):
    # X = -Y with Y a GBM(-1, 1): scale -(-x)^3 = x^3 on (-inf, 0), upper end attractive
    mirror = piecewise_scale((), [lambda y: y**3], -math.inf, 0.0,
                             ScaleLimits(lower=-math.inf, upper=0.0, lower_sq=0.0), name="mirror")
    assert classify(mirror, -x).tag == "CaseII"
    two = solve(mirror, -x)
    one = solve(gbm(-1.0, 1.0), x)
    assert rel(two.value, one.value) <= 1e-6
    assert abs(two.rule.b) == 0.0
    assert rel(-two.rule.a, one.rule.b) <= 1e-6


@crit(6)
@pytest.mark.parametrize("which", ["gbm", "example"])
def test_majorant_invariants(which):
    spec = gbm(-1.0, 1.0) if which == "gbm" else randomized_example()
    rng = np.random.default_rng(5)
    for c in rng.uniform(0.05, 3.0, 20):
        sol = maximizer_set(spec, c)
        y, s, h, hull = majorant_profile(spec, c, 4.0 * sol.z_hi)
        scale = np.maximum(1.0, np.abs(h))
        assert np.all(hull >= h - 1e-10 * scale)
        # concavity in value form: each point lies above the chord of its neighbours
        w = (s[1:-1] - s[:-2]) / (s[2:] - s[:-2])
        chord = (1 - w) * hull[:-2] + w * hull[2:]
        assert np.all(hull[1:-1] >= chord - 1e-10 * scale[1:-1])
        for z in sol.maximizers:
            # maximizers are contact points of the majorant
            m = majorant(spec, c, z)
            assert abs(m.value - (z - c) ** 2) <= 1e-8 * max(1.0, (z - c) ** 2)
        x = 0.5 * sol.z_lo
        m = majorant(spec, c, x)
        assert m.value >= (x - c) ** 2 - 1e-12
        assert rel(m.value, sol.value_at(x)) <= 1e-8


@crit(6)
def test_mc_law_of_total_variance():
    spec = gbm(-1.0, 1.0)
    x, p = 1.0, 0.3
    r1, r2 = ExitInterval(0.0, 2.0), ExitInterval(0.5, 3.0)
    m1, _, v1 = moments(spec, x, r1)
    m2, _, v2 = moments(spec, x, r2)
    target = p * v1 + (1 - p) * v2 + p * (1 - p) * (m1 - m2) ** 2
    rule = BernoulliMix(p, r1, r2)
    assert rel(rule_variance(spec, x, rule), target) <= 1e-12
    est = sample_rule(spec, x, rule, SampleConfig(seed=99, n=1_000_000))
    assert abs(est.variance - target) <= 3 * est.std_error_of_variance


@crit(6)
def test_recurrent_unit_interval():
    spec = logit_scale(0.0, 1.0)
    sol = solve(spec, 0.5)
    assert sol.classification.tag == "RecurrentBounded"
    assert sol.value == 0.25
    assert sol.rule.kind == "whole_interval"
    est = sample_rule(spec, 0.5, sol.rule, SampleConfig(seed=1, n=1_000_000, eps=0.01))
    assert est.variance >= 0.24
    # the natural-scale interval is transient but reaches the same value at the midpoint
    assert solve(natural_scale(0.0, 1.0), 0.5).value == pytest.approx(0.25, rel=1e-12)
