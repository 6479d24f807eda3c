import math

import numpy as np
import pytest

from varstop import gbm, jacobi, randomized_example, solve, solve_game
from varstop.errors import AssumptionViolated, DomainError
from varstop.game import _g, dual_value, duality_gap, essential_strategies, payoff, strategy_bounds


def test_strategy_bounds_gbm():
    b = strategy_bounds(gbm(-1.0, 1.0), 1.0)
    assert b.m_x == pytest.approx(4.01556, abs=1e-5)
    assert b.c_hat == pytest.approx(0.25, rel=1e-9)
    assert not b.c_hat_clamped


def test_payoff_at_start():
    assert payoff(gbm(-1.0, 1.0), 1.0, 1.0, 0.3) == pytest.approx(0.49)


def test_example_game():
    spec = randomized_example()
    g = solve_game(spec, 1.0, sandwich=True)
    assert g.value == pytest.approx(1.0625, rel=1e-10)
    assert g.c_star == pytest.approx(0.75, rel=1e-10)
    assert g.essential == pytest.approx((2.0, 12.0))
    assert g.mix.p == pytest.approx(0.7375, abs=1e-9)
    lo, hi = g.sandwich
    assert lo <= g.value * (1 + 1e-12) and hi >= g.value * (1 - 1e-12)
    assert g.bounds.c_hat_clamped


def test_gbm_sandwich_brackets():
    spec = gbm(-1.0, 1.0)
    g = solve_game(spec, 1.0, sandwich=True)
    lo, hi = g.sandwich
    v = solve(spec, 1.0).value
    assert lo <= v <= hi
    assert (hi - lo) / v <= 1e-4


def test_dual_refuses_above_failing_tie():
    spec = randomized_example()
    with pytest.raises(AssumptionViolated):
        dual_value(spec, 2.5)
    assert math.isnan(duality_gap(spec, 2.5))


@pytest.mark.parametrize("which, x", [("gbm", 1.0), ("example", 1.0)])
def test_dual_minimum_is_global_on_grid(which, x):
    spec = gbm(-1.0, 1.0) if which == "gbm" else randomized_example()
    b = strategy_bounds(spec, x)
    c_star, v = dual_value(spec, x, b)
    for c in np.linspace(b.c_hat, b.m_x, 64):
        assert _g(spec, x, c) >= v - 1e-12 * v


def test_essential_strategies_gbm():
    spec = gbm(-1.0, 1.0)
    c_star, v = dual_value(spec, 1.0)
    assert essential_strategies(spec, 1.0, c_star, v) == pytest.approx((4 ** (1 / 3),), rel=1e-8)


def test_game_domain():
    with pytest.raises(DomainError):
        solve_game(jacobi(0.02, 0.038, 0.26), 0.5)


def test_argmax_invariance_under_scaling():
    from varstop.diffusion import scaled

    spec = randomized_example()
    base = solve_game(spec, 2.0).essential
    for lam in (1e-3, 1e3):
        assert solve_game(scaled(spec, lam), 2.0).essential == pytest.approx(base, rel=1e-8)
