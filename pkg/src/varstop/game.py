"""Dual route: ``sup_tau inf_c E_x[(X_tau - c)^2]`` as a zero-sum game over thresholds and centers.

Only Case I (directly or after reflection) under the tie condition is handled;
other regimes are certified by the primal invariants alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from . import kernels
from .diffusion import DiffusionSpec, StateMap, classify, exit_mean
from .embedded import (
    _peaks,
    greatest_maximizer_path,
    maximizer_set,
    ratio,
    z_table,
)
from .errors import AssumptionViolated, DomainError, EmptyEssentialSet, NoSignChange
from .rules import ExitInterval, Rule, mix
from .solver import _canonical, center_bound, scan_ties

ESSENTIAL_RTOL = 1e-9
GRID = 2048


@dataclass(frozen=True)
class StrategyBounds:
    c_hat: float
    m_x: float
    n_x: float
    c_hat_clamped: bool = False


@dataclass
class GameSolution:
    x: float
    c_star: float
    value: float
    essential: tuple
    mix: Rule
    gap: float = math.nan
    bounds: Optional[StrategyBounds] = None
    sandwich: tuple = (math.nan, math.nan)
    notes: list = field(default_factory=list)


def payoff(spec: DiffusionSpec, x: float, z: float, c: float) -> float:
    """``A(tau_(alpha, z), c) = R(z; c) S(x) + (alpha - c)^2`` for ``z >= x``."""
    if z < x:
        raise DomainError(f"threshold {z} below the start {x}")
    if z == x:
        return (x - c) ** 2
    return ratio(spec, z, c) * spec.S(x) + (spec.alpha - c) ** 2


def _one_sided_mean(spec, x, z):
    return x if z <= x else exit_mean(spec, x, spec.alpha, z)


def strategy_bounds(spec: DiffusionSpec, x: float, n: int = 1024) -> StrategyBounds:
    """``[c_hat, M_x]`` for the center and the threshold ceiling ``N_x``."""
    m_x = center_bound(spec, x)
    cs = np.unique(np.concatenate([np.geomspace(m_x * 1e-6, m_x, n), np.linspace(m_x * 1e-6, m_x, n)]))
    tab, _, idx = greatest_maximizer_path(spec, cs)
    zc = tab.z[idx]
    above = np.nonzero(zc > x)[0]
    if above.size == 0:
        raise DomainError(f"no maximizer above x={x} for centers up to {m_x:.6g}")
    k = int(above[0])
    clamped = k == 0
    if clamped:
        c_hat = float(cs[0])
    else:
        lo, hi = float(cs[k - 1]), float(cs[k])
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if maximizer_set(spec, mid).z_hi > x:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-14 * hi:
                break
        c_hat = hi
    n_x = max(float(zc.max()), maximizer_set(spec, m_x).z_hi)
    return StrategyBounds(c_hat, m_x, n_x, clamped)


def _g(spec: DiffusionSpec, x: float, c: float) -> float:
    return maximizer_set(spec, c).ratio_value * spec.S(x) + (spec.alpha - c) ** 2


def _g_slope(spec: DiffusionSpec, x: float, c: float, side: str = "right") -> float:
    """One-sided derivative ``2(c - E_x X_tau(alpha, z_c))`` by the envelope theorem."""
    sol = maximizer_set(spec, c)
    z = sol.z_hi if side == "right" else sol.z_lo
    return 2.0 * (c - _one_sided_mean(spec, x, z))


def dual_value(spec: DiffusionSpec, x: float, bounds: StrategyBounds | None = None):
    """Minimize ``g(c) = R*(c) S(x) + c^2`` over ``[c_hat, M_x]``, splitting at tie kinks."""
    b = bounds or strategy_bounds(spec, x)
    regions, _ = scan_ties(spec, b.m_x)
    kinks = []
    for reg in regions:
        if b.c_hat <= reg.c <= b.m_x:
            if not reg.assumption2 and x > reg.z_lo:
                raise AssumptionViolated(
                    f"tie at c={reg.c:.6g} fails the tie condition above z_lo={reg.z_lo:.6g}"
                )
            kinks.append(reg.c)
    edges = sorted(set([b.c_hat, b.m_x] + kinks))
    best_c, best_v = None, math.inf
    for c in edges:
        v = _g(spec, x, c)
        if v < best_v:
            best_c, best_v = c, v
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        # g is convex: a smooth minimum sits where the slope changes sign
        s_lo = _g_slope(spec, x, lo * (1 + 1e-12) if lo in kinks else lo, "right")
        s_hi = _g_slope(spec, x, hi * (1 - 1e-12) if hi in kinks else hi, "left")
        if s_lo < 0 < s_hi:
            c = optimize.brentq(lambda t: _g_slope(spec, x, t), lo, hi, xtol=1e-15,
                                rtol=4 * np.finfo(float).eps, maxiter=200)
            v = _g(spec, x, c)
            if v < best_v:
                best_c, best_v = c, v
    return float(best_c), float(best_v)


def essential_strategies(spec: DiffusionSpec, x: float, c_star: float, value: float | None = None,
                         n_x: float | None = None) -> tuple:
    """Thresholds in ``[x, N_x]`` whose payoff at ``c_star`` equals the game value."""
    tab = z_table(spec, c_star, x)
    peaks, _ = _peaks(spec, tab, c_star, screen=1e-6)
    cands = sorted({float(z) for z, _, _ in peaks if z >= x and (n_x is None or z <= n_x * (1 + 1e-9))})
    cands.append(x)
    vals = [payoff(spec, x, z, c_star) for z in cands]
    top = max(vals) if value is None else value
    tol = ESSENTIAL_RTOL * max(abs(top), 1e-300)
    out = sorted({z for z, v in zip(cands, vals) if v >= top - tol})
    if not out:
        raise EmptyEssentialSet(f"no threshold attains {top:.12g} at c={c_star:.12g}")
    return tuple(out)


def mixed_from_essentials(spec: DiffusionSpec, x: float, c_star: float, essentials) -> Rule:
    """Pure rule when some essential has zero center-derivative, else a two-point mix."""
    if not essentials:
        raise EmptyEssentialSet("no essential strategies")
    a = spec.alpha
    d = [(z, 2.0 * (c_star - _one_sided_mean(spec, x, z))) for z in essentials]
    tol = 1e-8 * (1.0 + abs(c_star))
    for z, slope in d:
        if abs(slope) <= tol:
            return ExitInterval(a, z) if z > x else ExitInterval(x, x)
    neg = [(z, s) for z, s in d if s < 0]
    pos = [(z, s) for z, s in d if s > 0]
    if not neg or not pos:
        raise NoSignChange(f"essential slopes do not change sign: {d}")
    (z1, s1), (z2, s2) = neg[0], pos[-1]
    p = s2 / (s2 - s1)
    return mix(p, ExitInterval(a, max(z1, x)), ExitInterval(a, max(z2, x)))


def minimax_sandwich(spec: DiffusionSpec, x: float, bounds: StrategyBounds, n: int = GRID,
                     c_extra=(), z_extra=()):
    """Grid bounds ``(max_z-mix min_c, min_c max_z)`` around the game value."""
    a = spec.alpha
    sx = spec.S(x)
    zs = np.unique(np.concatenate([
        a + (x - a) * np.geomspace(1.0, (bounds.n_x - a) / (x - a), n),
        [z for z in spec.scale.breakpoints if x < z <= bounds.n_x],
        [z for z in z_extra if x <= z <= bounds.n_x],
    ]))
    q = sx / np.asarray(spec.S(zs), dtype=float)
    q[0] = 1.0  # z = x stops at once
    mean = (zs - a) * q + a
    second = (zs - a) ** 2 * q + 2 * a * (zs - a) * q + a * a
    lower = kernels.best_pair_variance(mean, second)[0]

    cs = np.unique(np.concatenate([
        np.linspace(bounds.c_hat, bounds.m_x, n),
        [c for c in c_extra if bounds.c_hat <= c <= bounds.m_x],
    ]))
    A = (zs * zs - a * a) / np.asarray(spec.S(zs), dtype=float) * sx
    B = 2.0 * (zs - a) / np.asarray(spec.S(zs), dtype=float) * sx
    A[0], B[0] = x * x - a * a, 2.0 * (x - a)
    gmax, _ = kernels.envelope_argmax(A, B, cs)
    gmax = np.asarray(gmax) + (a - cs) ** 2
    floor = float(gmax.min())
    near = np.nonzero(gmax <= floor + 1e-4 * abs(floor))[0]
    upper = float(gmax[gmax > floor + 1e-4 * abs(floor)].min()) if near.size < gmax.size else math.inf
    for i in near:
        # refine the inner maximum where it decides the bound
        upper = min(upper, max(float(gmax[i]), _g(spec, x, float(cs[i]))))
    return float(lower), float(upper)


def solve_game(spec: DiffusionSpec, x: float, sandwich: bool = False) -> GameSolution:
    """Dual solve in original coordinates; Case I or Case II only."""
    x = spec.check_state(x)
    cls = classify(spec, x)
    if cls.tag not in ("CaseI", "CaseII"):
        raise DomainError(f"dual route covers Case I/II only, got {cls.tag}")
    canon, m = _canonical(spec, x, cls)
    y = m.to_canonical(x)
    b = strategy_bounds(canon, y)
    c_star, value = dual_value(canon, y, b)
    ess = essential_strategies(canon, y, c_star, value, b.n_x)
    rule = mixed_from_essentials(canon, y, c_star, ess)
    notes = ["c_hat clamped to the smallest scanned center"] if b.c_hat_clamped else []
    sw = (math.nan, math.nan)
    if sandwich:
        regions, _ = scan_ties(canon, b.m_x)
        sw = minimax_sandwich(canon, y, b, c_extra=[r.c for r in regions])
    ess_orig = tuple(sorted(m.to_original(z) for z in ess))
    bounds_orig = _pull_bounds(b, m)
    return GameSolution(x, m.to_original(c_star), value, ess_orig, rule.pull_back(m),
                        bounds=bounds_orig, sandwich=sw, notes=notes)


def _pull_bounds(b: StrategyBounds, m: StateMap) -> StrategyBounds:
    lo, hi = sorted((m.to_original(b.c_hat), m.to_original(b.m_x)))
    return StrategyBounds(lo, hi, m.to_original(b.n_x), b.c_hat_clamped)


def duality_gap(spec: DiffusionSpec, x: float, primal_value: float | None = None) -> float:
    """``|primal - dual|``; NaN when the dual route refuses the instance."""
    if primal_value is None:
        from .solver import solve

        primal_value = solve(spec, x).value
    try:
        dual = solve_game(spec, x).value
    except (AssumptionViolated, DomainError):
        return math.nan
    return abs(primal_value - dual)
