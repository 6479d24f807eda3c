import math

import pytest

from varstop import gbm, natural_scale
from varstop.diffusion import StateMap
from varstop.errors import DomainError, UnsupportedRule
from varstop.rules import (
    BernoulliMix,
    EpsilonFamily,
    ExitInterval,
    Immediate,
    WholeInterval,
    mix,
    moments,
    rule_mean,
    rule_variance,
    thresholds,
)


def test_mix_collapses():
    r1, r2 = ExitInterval(0.0, 1.0), ExitInterval(0.0, 2.0)
    assert mix(1.0, r1, r2) is r1
    assert mix(0.0, r1, r2) is r2
    assert isinstance(mix(0.5, r1, r2), BernoulliMix)
    with pytest.raises(DomainError):
        BernoulliMix(1.5, r1, r2)


def test_exit_interval_validation():
    with pytest.raises(DomainError):
        ExitInterval(2.0, 1.0)


def test_moments_on_natural_scale():
    spec = natural_scale(0.0, 1.0)
    m, second, var = moments(spec, 0.3, ExitInterval(0.0, 1.0))
    assert m == pytest.approx(0.3)
    assert var == pytest.approx(0.21)
    assert second == pytest.approx(0.3)
    assert rule_variance(spec, 0.3, Immediate()) == 0.0
    # start outside the interval stops at once
    assert rule_variance(spec, 0.3, ExitInterval(0.5, 0.9)) == 0.0


def test_mixture_total_variance():
    spec = gbm(-1.0, 1.0)
    x, p = 1.0, 0.4
    r1, r2 = ExitInterval(0.0, 2.0), ExitInterval(0.5, 1.5)
    m1, v1 = rule_mean(spec, x, r1), rule_variance(spec, x, r1)
    m2, v2 = rule_mean(spec, x, r2), rule_variance(spec, x, r2)
    total = p * v1 + (1 - p) * v2 + p * (1 - p) * (m1 - m2) ** 2
    assert rule_variance(spec, x, BernoulliMix(p, r1, r2)) == pytest.approx(total, rel=1e-12)


def test_epsilon_family():
    fam = EpsilonFamily(lambda eps: ExitInterval(0.0, 1.0 / eps), 4.0)
    assert fam.at(0.5) == ExitInterval(0.0, 2.0)
    with pytest.raises(DomainError):
        fam.at(0.0)
    with pytest.raises(UnsupportedRule):
        fam.atoms(gbm(-1.0, 1.0), 1.0)
    pulled = fam.pull_back(StateMap(3.0, -1.0))
    assert pulled.at(0.5) == ExitInterval(1.0, 3.0)


def test_whole_interval():
    w = WholeInterval(0.0, 1.0)
    assert w.at(0.1) == ExitInterval(0.0, 1.0)
    fam = EpsilonFamily(lambda eps: ExitInterval(eps, 1 - eps), 0.25)
    w = WholeInterval(0.0, 1.0, fam)
    with pytest.raises(UnsupportedRule):
        w.atoms(natural_scale(0.0, 1.0), 0.5)
    assert w.at(0.1) == ExitInterval(0.1, 0.9)


def test_pull_back_and_thresholds():
    m = StateMap(5.0, -1.0)
    r = BernoulliMix(0.3, ExitInterval(0.0, 2.0), ExitInterval(0.0, 4.0)).pull_back(m)
    assert thresholds(r) == (1.0, 3.0, 5.0)
    assert thresholds(Immediate()) == ()


def test_unbounded_mass():
    spec = gbm(1.0, 1.0)
    with pytest.raises(Exception):
        rule_variance(spec, 1.0, ExitInterval(0.5, math.inf))
