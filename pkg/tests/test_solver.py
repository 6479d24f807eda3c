import math

import numpy as np
import pytest

from varstop import (
    ExitInterval,
    ScaleLimits,
    gbm,
    jacobi,
    logit_scale,
    randomized_example,
    piecewise_scale,
    solve,
    value_profile,
)
from varstop.errors import NonMonotoneScale
from varstop.rules import rule_variance
from varstop.solver import SolveFailure, center_bound, monotonicity_check, threshold_value


def test_monotone_shortcut_on_gbm():
    spec = gbm(-1.0, 1.0)
    assert monotonicity_check(spec)
    sol = solve(spec, 1.0)
    assert sol.diagnostics.monotone_shortcut_used
    assert sol.mean_ok
    assert sol.c_star == pytest.approx(4.0 ** (1 / 3) / 4, rel=1e-8)


def test_threshold_value_matches_variance():
    spec = gbm(-1.0, 1.0)
    for z in (1.2, 1.5874, 3.0):
        assert threshold_value(spec, 1.0, z) == pytest.approx(rule_variance(spec, 1.0, ExitInterval(0.0, z)), rel=1e-12)


def test_center_bound_gbm():
    assert center_bound(gbm(-1.0, 1.0), 1.0) == pytest.approx(4.01556, abs=1e-5)


def test_example_outside_region_is_pure():
    spec = randomized_example()
    sol = solve(spec, 0.5)
    assert sol.rule == ExitInterval(0.0, 2.0)
    assert sol.value == pytest.approx(0.75, rel=1e-10)
    above = solve(spec, 3.5)
    assert above.rule.kind == "exit"
    assert above.value >= rule_variance(spec, 3.5, ExitInterval(0.0, 12.0))


def test_infinite_value_family():
    spec = gbm(1.0, 1.0)
    sol = solve(spec, 1.0)
    assert sol.value == math.inf and sol.rule.kind == "epsilon"
    for eps in (0.1, 0.01):
        assert rule_variance(spec, 1.0, sol.rule.at(eps)) >= 1 / eps


def test_recurrent_family_is_eps_optimal():
    spec = logit_scale(0.0, 1.0)
    sol = solve(spec, 0.3)
    assert sol.value == 0.25
    for eps in (0.1, 0.01):
        assert rule_variance(spec, 0.3, sol.rule.at(eps)) >= 0.25 - eps


def test_case_three_jacobi_branches():
    spec = jacobi(0.02, 0.038, 0.26)
    low, high = solve(spec, 0.2), solve(spec, 0.7)
    assert low.rule.a == 0.0 and low.rule.b < 1.0
    assert high.rule.a > 0.0 and high.rule.b == 1.0


def test_unreached_finite_upper_end_against_brute_force():
    spec = piecewise_scale((), [lambda x: x / (1 - x)], 0.0, 1.0, ScaleLimits(lower=0.0, upper=math.inf))
    for x in (0.2, 0.5, 0.8):
        sol = solve(spec, x)
        bs = np.linspace(x, 1 - 1e-9, 4001)
        brute = max(rule_variance(spec, x, ExitInterval(0.0, b)) for b in bs)
        assert sol.value >= brute - 1e-12
        assert sol.value == pytest.approx(brute, rel=1e-6)


def test_value_profile_records_failures():
    sols = value_profile(randomized_example(verbatim=True), [1.0, 2.0])
    assert all(isinstance(s, SolveFailure) and isinstance(s.error, NonMonotoneScale) for s in sols)
    ok = value_profile(randomized_example(), np.linspace(0.5, 3.0, 11))
    assert not any(isinstance(s, SolveFailure) for s in ok)
