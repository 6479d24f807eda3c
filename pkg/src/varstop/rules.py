"""Stopping rules in closed form and their exit distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .diffusion import DiffusionSpec, StateMap, hit_prob
from .errors import DomainError, Unbounded, UnsupportedRule


@dataclass(frozen=True)
class Immediate:
    kind = "immediate"

    def atoms(self, spec: DiffusionSpec, x: float):
        return [(1.0, x)]

    def pull_back(self, m: StateMap) -> "Immediate":
        return self


@dataclass(frozen=True)
class ExitInterval:
    """First exit from ``(a, b)``; either edge may be an endpoint of the state space."""

    a: float
    b: float
    kind = "exit"

    def __post_init__(self):
        if not self.a <= self.b:
            raise DomainError(f"exit interval needs a <= b, got ({self.a}, {self.b})")

    def atoms(self, spec: DiffusionSpec, x: float):
        if not self.a <= x <= self.b:
            return [(1.0, x)]
        p_lo, p_hi = hit_prob(spec, x, self.a, self.b)
        out = []
        for p, end in ((p_lo, self.a), (p_hi, self.b)):
            if p > 0:
                if math.isinf(end):
                    raise Unbounded(f"exit rule puts mass {p:.3g} at {end}")
                out.append((p, end))
        return out

    def pull_back(self, m: StateMap) -> "ExitInterval":
        a, b = m.interval(self.a, self.b)
        return ExitInterval(a, b)


@dataclass(frozen=True)
class BernoulliMix:
    """With probability ``p`` follow ``first``, otherwise ``second``; the coin is independent of X."""

    p: float
    first: "Rule"
    second: "Rule"
    kind = "mix"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"mixing weight {self.p} outside [0, 1]")

    def atoms(self, spec: DiffusionSpec, x: float):
        out = [(self.p * w, v) for w, v in self.first.atoms(spec, x)]
        out += [((1.0 - self.p) * w, v) for w, v in self.second.atoms(spec, x)]
        return [(w, v) for w, v in out if w > 0]

    def pull_back(self, m: StateMap) -> "BernoulliMix":
        return BernoulliMix(self.p, self.first.pull_back(m), self.second.pull_back(m))


@dataclass(frozen=True)
class EpsilonFamily:
    """Rules indexed by a tolerance; ``builder(eps)`` is within ``eps`` of ``value``.

    For an infinite ``value`` the built rule has variance at least ``1/eps``.
    """

    builder: Callable[[float], "Rule"]
    value: float
    description: str = ""
    kind = "epsilon"

    def at(self, eps: float) -> "Rule":
        if not eps > 0:
            raise DomainError("tolerance must be positive")
        return self.builder(eps)

    def atoms(self, spec, x):
        raise UnsupportedRule("an epsilon family must be instantiated with a tolerance first")

    def pull_back(self, m: StateMap) -> "EpsilonFamily":
        inner = self.builder
        return EpsilonFamily(lambda eps: inner(eps).pull_back(m), self.value, self.description)


@dataclass(frozen=True)
class WholeInterval:
    """Exit from the whole state space; in recurrent cases only its family is attainable."""

    alpha: float
    beta: float
    family: Optional[EpsilonFamily] = field(default=None, compare=False)
    kind = "whole_interval"

    def at(self, eps: float) -> "Rule":
        if self.family is None:
            return ExitInterval(self.alpha, self.beta)
        return self.family.at(eps)

    def atoms(self, spec, x):
        if self.family is not None:
            raise UnsupportedRule("whole-interval exit is not attained; sample its family at a tolerance")
        return ExitInterval(self.alpha, self.beta).atoms(spec, x)

    def pull_back(self, m: StateMap) -> "WholeInterval":
        a, b = m.interval(self.alpha, self.beta)
        fam = None if self.family is None else self.family.pull_back(m)
        return WholeInterval(a, b, fam)


Rule = Union[Immediate, ExitInterval, BernoulliMix, EpsilonFamily, WholeInterval]


def mix(p: float, first: Rule, second: Rule) -> Rule:
    """Bernoulli mixture collapsing to a pure rule when ``p`` is 0 or 1."""
    if p >= 1.0:
        return first
    if p <= 0.0:
        return second
    return BernoulliMix(p, first, second)


def moments(spec: DiffusionSpec, x: float, rule: Rule):
    """``(E X_tau, E X_tau^2, Var X_tau)`` from the exact atoms of the rule."""
    atoms = rule.atoms(spec, x)
    m1 = sum(w * v for w, v in atoms)
    # centre at x to keep the variance free of cancellation
    d1 = sum(w * (v - x) for w, v in atoms)
    d2 = sum(w * (v - x) ** 2 for w, v in atoms)
    var = max(d2 - d1 * d1, 0.0)
    return m1, m1 * m1 + var, var


def rule_mean(spec, x, rule) -> float:
    return moments(spec, x, rule)[0]


def rule_variance(spec, x, rule) -> float:
    return moments(spec, x, rule)[2]


def thresholds(rule: Rule) -> tuple:
    """Exit edges that appear in a rule, sorted."""
    if isinstance(rule, ExitInterval):
        return (rule.a, rule.b)
    if isinstance(rule, BernoulliMix):
        return tuple(sorted(set(thresholds(rule.first) + thresholds(rule.second))))
    if isinstance(rule, WholeInterval):
        return (rule.alpha, rule.beta)
    return ()
