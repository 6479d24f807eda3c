"""Monte-Carlo checks of stopping rules from their exact exit laws.

Samples are drawn in fixed-size blocks; block ``k`` always uses the Philox
stream with counter ``(0, 0, k, 0)`` under the configured key, and block
statistics are merged pairwise in block order. Estimates therefore do not
depend on how many workers run the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .diffusion import DiffusionSpec, hit_prob
from .errors import DomainError, StepTooCoarse, UnsupportedRule
from .rules import BernoulliMix, EpsilonFamily, ExitInterval, Immediate, Rule, WholeInterval

BLOCK = 1 << 16


@dataclass(frozen=True)
class SampleConfig:
    seed: int = 0
    n: int = 1_000_000
    workers: int = 1
    block: int = BLOCK
    eps: float | None = None  # tolerance used to instantiate epsilon families

    def generator(self, k: int) -> np.random.Generator:
        """Independent substream for block ``k``."""
        return np.random.Generator(np.random.Philox(key=self.seed, counter=[0, 0, k, 0]))

    def blocks(self):
        full, rest = divmod(self.n, self.block)
        sizes = [self.block] * full + ([rest] if rest else [])
        return list(enumerate(sizes))


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    variance: float
    std_error_of_variance: float
    n_effective: int
    absorbed_fraction: float

    def z_score(self, target: float) -> float:
        if self.std_error_of_variance == 0.0:
            return 0.0 if self.variance == target else math.copysign(math.inf, self.variance - target)
        return (self.variance - target) / self.std_error_of_variance


@dataclass(frozen=True)
class _Moments:
    """Count, mean and central sums of orders 2-4 of shifted samples."""

    n: int
    mean: float
    m2: float
    m3: float
    m4: float
    absorbed: int

    @classmethod
    def of(cls, d: np.ndarray, absorbed: int) -> "_Moments":
        n = d.size
        if n == 0:
            return cls(0, 0.0, 0.0, 0.0, 0.0, 0)
        mu = float(d.mean())
        e = d - mu
        e2 = e * e
        return cls(n, mu, float(e2.sum()), float((e2 * e).sum()), float((e2 * e2).sum()), absorbed)

    def merge(self, o: "_Moments") -> "_Moments":
        if self.n == 0:
            return o
        if o.n == 0:
            return self
        n = self.n + o.n
        delta = o.mean - self.mean
        na, nb = self.n, o.n
        mean = self.mean + delta * nb / n
        m2 = self.m2 + o.m2 + delta**2 * na * nb / n
        m3 = (self.m3 + o.m3 + delta**3 * na * nb * (na - nb) / n**2
              + 3 * delta * (na * o.m2 - nb * self.m2) / n)
        m4 = (self.m4 + o.m4 + delta**4 * na * nb * (na * na - na * nb + nb * nb) / n**3
              + 6 * delta**2 * (na * na * o.m2 + nb * nb * self.m2) / n**2
              + 4 * delta * (na * o.m3 - nb * self.m3) / n)
        return _Moments(n, mean, m2, m3, m4, self.absorbed + o.absorbed)


def _pairwise(parts: list) -> _Moments:
    while len(parts) > 1:
        nxt = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _resolve(rule: Rule, cfg: SampleConfig) -> Rule:
    if isinstance(rule, (EpsilonFamily, WholeInterval)):
        if isinstance(rule, WholeInterval) and rule.family is None:
            return ExitInterval(rule.alpha, rule.beta)
        if cfg.eps is None:
            raise UnsupportedRule("epsilon family needs SampleConfig.eps")
        return _resolve(rule.at(cfg.eps), cfg)
    if isinstance(rule, BernoulliMix):
        return BernoulliMix(rule.p, _resolve(rule.first, cfg), _resolve(rule.second, cfg))
    return rule


def _draw(spec: DiffusionSpec, x: float, rule: Rule, gen: np.random.Generator, n: int) -> np.ndarray:
    """Exit positions: mixture coin first, then the two-point exit law."""
    if isinstance(rule, Immediate):
        return np.full(n, x)
    if isinstance(rule, ExitInterval):
        if not rule.a <= x <= rule.b:
            return np.full(n, x)
        p_lo, p_hi = hit_prob(spec, x, rule.a, rule.b)
        for p, end in ((p_lo, rule.a), (p_hi, rule.b)):
            if p > 0 and math.isinf(end):
                raise DomainError(f"exit law puts mass {p:.3g} at {end}")
        u = gen.random(n)
        return np.where(u < p_hi, rule.b, rule.a) if p_lo > 0 else np.full(n, rule.b)
    if isinstance(rule, BernoulliMix):
        coin = gen.random(n) < rule.p
        out = np.empty(n)
        k = int(coin.sum())
        out[coin] = _draw(spec, x, rule.first, gen, k)
        out[~coin] = _draw(spec, x, rule.second, gen, n - k)
        return out
    raise UnsupportedRule(f"cannot sample {type(rule).__name__}")


def _block(spec, x, rule, cfg, k, size) -> _Moments:
    v = _draw(spec, x, rule, cfg.generator(k), size)
    absorbed = int(np.count_nonzero((v == spec.alpha) | (v == spec.beta)))
    # shift by the start so that an immediate stop has exactly zero spread
    return _Moments.of(v - x, absorbed)


def sample_rule(spec: DiffusionSpec, x: float, rule: Rule, cfg: SampleConfig) -> EstimatorResult:
    """Mean and variance of ``X_tau`` with a fourth-moment standard error."""
    x = spec.check_state(x)
    rule = _resolve(rule, cfg)
    jobs = cfg.blocks()
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(lambda kb: _block(spec, x, rule, cfg, *kb), jobs))
    else:
        parts = [_block(spec, x, rule, cfg, k, b) for k, b in jobs]
    tot = _pairwise(parts)
    n = tot.n
    var = tot.m2 / n
    mu4 = tot.m4 / n
    se = math.sqrt(max(mu4 - var * var, 0.0) / n)
    return EstimatorResult(x + tot.mean, var, se, n, tot.absorbed / n)


# ---------------------------------------------------------------------------
# SDE cross-check


@dataclass(frozen=True)
class HitEstimate:
    p_lower: float
    p_upper: float
    ci_halfwidth: float
    n: int
    steps: int


def _simulate(spec, x, a, b, step, n, gen, max_steps):
    X = np.full(n, float(x))
    alive = np.ones(n, dtype=bool)
    upper = np.zeros(n, dtype=bool)
    sq = math.sqrt(step)
    k = 0
    idx = np.arange(n)
    while idx.size and k < max_steps:
        xi = X[idx]
        mu = np.asarray(spec.drift(xi), dtype=float)
        sig = np.asarray(spec.vol(xi), dtype=float)
        xn = xi + mu * step + sig * sq * gen.standard_normal(idx.size)
        # Brownian-bridge probability of an unseen crossing inside the step
        s2 = np.maximum(sig * sig * step, 1e-300)
        with np.errstate(over="ignore", invalid="ignore"):
            p_up = np.where((xi < b) & (xn < b), np.exp(-2.0 * (b - xi) * (b - xn) / s2), 1.0)
            p_dn = np.where((xi > a) & (xn > a), np.exp(-2.0 * (xi - a) * (xn - a) / s2), 1.0)
        u = gen.random((2, idx.size))
        hit_up = (xn >= b) | (u[0] < p_up)
        hit_dn = ~hit_up & ((xn <= a) | (u[1] < p_dn))
        done = hit_up | hit_dn
        upper[idx[hit_up]] = True
        alive[idx[done]] = False
        X[idx] = xn
        idx = idx[~done]
        k += 1
    return upper, alive, k


def sde_paths(spec: DiffusionSpec, x: float, a: float, b: float, step: float, cfg: SampleConfig,
              check_bias: bool = True, max_steps: int = 10_000_000) -> HitEstimate:
    """Euler-Maruyama exit probabilities from ``(a, b)``, with a step-halving bias test."""
    if spec.drift is None or spec.vol is None:
        raise DomainError("SDE sampling needs drift and vol")
    if not (spec.alpha < a <= x <= b < spec.beta):
        raise DomainError("need alpha < a <= x <= b < beta")
    if x == a or x == b:
        p_hi = 1.0 if x == b else 0.0
        return HitEstimate(1.0 - p_hi, p_hi, 0.0, cfg.n, 0)

    def run(h, k):
        upper, alive, steps = _simulate(spec, x, a, b, h, cfg.n, cfg.generator(k), max_steps)
        m = cfg.n - int(alive.sum())
        p = float(upper.sum()) / max(m, 1)
        half = 1.96 * math.sqrt(max(p * (1 - p), 1.0 / m) / m)
        return HitEstimate(1.0 - p, p, half, m, steps)

    est = run(step, 0)
    if check_bias:
        fine = run(step / 2.0, 1)
        if abs(fine.p_upper - est.p_upper) > 2.0 * (est.ci_halfwidth + fine.ci_halfwidth):
            raise StepTooCoarse(
                f"halving the step moved P(upper) from {est.p_upper:.4f} to {fine.p_upper:.4f}"
            )
    return est
