"""Variance-maximizing stopping rules: dispatch over regimes and the region algorithm.

The work happens in canonical coordinates (``alpha = 0``, ``S(0) = 0``, the
attractive endpoint at the bottom). Results are mapped back to the original
state space before they are returned.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import optimize

from .diffusion import (
    Classification,
    DiffusionSpec,
    StateMap,
    classify,
    exit_mean,
    reflect,
    translate_to_zero,
)
from .embedded import (
    PLATEAU_RTOL,
    Tie,
    _decay_bmax,
    _special,
    _upper_is_state,
    assumption2_holds,
    c_grid,
    majorant,
    maximizer_set,
    multi_maximizer_scan,
    z_table,
)
from .errors import (
    BracketError,
    DomainError,
    OutOfRegion,
    UnsupportedMarginal,
    VarStopError,
)
from .rules import (
    EpsilonFamily,
    ExitInterval,
    Rule,
    WholeInterval,
    mix,
    moments,
)
from .scale import probe_grid

MONOTONE_TOL = 1e-9
MEAN_RTOL = 1e-8
SCAN_POINTS = 1024
FOC_TOL = 1e-10


class Boundary(enum.Enum):
    AT_BETA = "at_beta"
    AT_INFINITY = "at_infinity"


AtBeta = Boundary.AT_BETA
AtInfinity = Boundary.AT_INFINITY


@dataclass(frozen=True)
class RandomizationRegion:
    c: float
    z_lo: float
    z_hi: float
    x_lo: float
    x_hi: float
    assumption2: bool
    ratio_value: float
    d_c: Optional[tuple] = None

    def contains(self, x: float) -> bool:
        return self.x_lo < x < self.x_hi

    def pull_back(self, m: StateMap) -> "RandomizationRegion":
        z_lo, z_hi = m.interval(self.z_lo, self.z_hi)
        x_lo, x_hi = m.interval(self.x_lo, self.x_hi)
        d_c = None if self.d_c is None else m.interval(*self.d_c)
        return replace(self, c=m.to_original(self.c), z_lo=z_lo, z_hi=z_hi,
                       x_lo=x_lo, x_hi=x_hi, d_c=d_c)


@dataclass
class Diagnostics:
    mean_under_rule: float = math.nan
    duality_gap: float = math.nan
    monotone_shortcut_used: bool = False
    scan_resolution: float = math.nan
    c_scan_min: float = math.nan
    notes: list = field(default_factory=list)


@dataclass
class VarianceSolution:
    x: float
    value: float
    rule: Rule
    c_star: float
    classification: Classification
    region: Optional[RandomizationRegion] = None
    p_star: Optional[float] = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    @property
    def mean_ok(self) -> Optional[bool]:
        if self.rule.kind in ("epsilon", "whole_interval"):
            return None
        return abs(self.diagnostics.mean_under_rule - self.c_star) <= MEAN_RTOL * (1.0 + abs(self.c_star))


@dataclass(frozen=True)
class SolveFailure:
    x: float
    error: VarStopError


# ---------------------------------------------------------------------------
# threshold rules


def threshold_value(spec: DiffusionSpec, x: float, z) -> float:
    """Variance of the one-sided exit ``tau_(alpha, z)`` from ``x`` (canonical)."""
    if z is AtInfinity or (isinstance(z, float) and math.isinf(z)):
        sq, _ = spec.squared_limit("upper")
        return sq * spec.S(x)
    if z is AtBeta:
        z = spec.beta
    q = spec.S(x) / spec.S(z)
    return (z - spec.alpha) ** 2 * q * (1.0 - q)


def _q_map(spec: DiffusionSpec, z):
    with np.errstate(all="ignore"):
        return spec.dS(z) * (z - spec.alpha) / spec.S(z)


def monotonicity_check(spec: DiffusionSpec) -> bool:
    """Whether ``S'(z)(z - alpha)/S(z)`` is non-decreasing on a probe grid."""
    if "monotone" in spec.cache:
        return spec.cache["monotone"]
    z = probe_grid(spec.alpha, spec.beta, 2048)
    z = z[~spec.scale.near_breakpoint(z)]
    q = np.asarray(_q_map(spec, z), dtype=float)
    ok = np.isfinite(q)
    q = q[ok]
    dq = np.diff(q)
    scale = np.maximum(np.abs(q[1:]), np.abs(q[:-1]))
    result = bool(np.all(dq >= -MONOTONE_TOL * np.maximum(scale, 1e-300)))
    spec.cache["monotone"] = result
    return result


def _foc(spec: DiffusionSpec, x: float):
    """First-order condition divided by ``S(z)^2`` (bounded, positive at its left bracket)."""
    sx = spec.S(x)

    def F(z):
        r = sx / spec.S(z)
        return 1.0 - r - _q_map(spec, z) * (0.5 - r)

    return F


def _left_bracket(spec: DiffusionSpec, x: float):
    target = 2.0 * spec.S(x)
    if _upper_is_state(spec) and target >= spec.s_beta:
        return None
    z0 = spec.S_inv(target, lo=x)
    if not math.isfinite(z0) or z0 > 1e300:
        raise BracketError(f"S^-1(2 S(x)) not representable for x={x}")
    return z0


def _upper_search_limit(spec: DiffusionSpec, z0: float) -> float:
    if math.isfinite(spec.beta):
        if _upper_is_state(spec):
            return spec.beta
        return spec.beta - 1e-12 * (spec.beta - spec.alpha)
    return spec.alpha + (z0 - spec.alpha) * 2.0**60


def first_order_boundary(spec: DiffusionSpec, x: float):
    """Upper threshold from the first-order condition on ``(S^-1(2S(x)), beta)``.

    Returns a state, ``AtBeta`` when the condition has no root and beta is a
    reachable endpoint, or ``AtInfinity`` in the special transient case.
    """
    x = spec.check_state(x)
    z0 = _left_bracket(spec, x)
    if z0 is None:
        return AtBeta
    F = _foc(spec, x)
    hi_lim = _upper_search_limit(spec, z0)
    lo = z0
    f_lo = F(lo)
    # march outwards: the root is the first sign change
    step = max(z0 - spec.alpha, 1e-12)
    k = 0
    while True:
        if math.isfinite(spec.beta):
            hi = min(hi_lim, spec.beta - (spec.beta - z0) * 0.5 ** (k + 1))
        else:
            hi = min(hi_lim, z0 + step * (2.0 ** (k + 1) - 1.0))
        f_hi = F(hi)
        # a genuine crossing is transversal; rounding near zero is not a root
        if np.isfinite(f_hi) and f_hi < -FOC_TOL and f_lo > 0:
            break
        if hi >= hi_lim or k > 200:
            if _upper_is_state(spec) and F(spec.beta) > 0:
                return AtBeta
            if _upper_is_state(spec):
                lo, hi = hi, spec.beta
                break
            return AtInfinity if _special(spec) else _no_root(spec, x)
        if np.isfinite(f_hi):
            lo, f_lo = hi, f_hi
        k += 1
    if F(hi) == 0:
        return float(hi)
    return float(optimize.brentq(F, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=300))


def _no_root(spec, x):
    raise BracketError(f"first-order condition has no root above x={x}")


def foc_candidates(spec: DiffusionSpec, x: float, hi: float) -> list:
    """All bracketed roots of the first-order condition on ``(S^-1(2S(x)), hi]``."""
    z0 = _left_bracket(spec, x)
    if z0 is None or z0 >= hi:
        return []
    a = spec.alpha
    z = np.unique(np.concatenate([
        a + (z0 - a) * np.geomspace(1.0, (hi - a) / (z0 - a), 2048),
        np.linspace(z0, hi, 1025),
        [bp for bp in spec.scale.breakpoints if z0 < bp < hi],
    ]))
    F = _foc(spec, x)
    f = np.asarray(F(z), dtype=float)
    sgn = np.where(f > FOC_TOL, 1, np.where(f < -FOC_TOL, -1, 0))
    out = []
    for i in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
        lo, up = z[i], z[i + 1]
        if any(lo < bp <= up for bp in spec.scale.breakpoints):
            out.extend(bp for bp in spec.scale.breakpoints if lo < bp <= up)
            continue
        out.append(optimize.brentq(F, lo, up, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return out


def best_threshold(spec: DiffusionSpec, x: float, hi: float):
    """Global maximizer of ``v(x, z)`` over ``z`` in ``(x, hi]``: grid, roots and kinks."""
    a = spec.alpha
    z = np.unique(np.concatenate([
        a + (x - a) * np.geomspace(1.0, (hi - a) / (x - a), 4096)[1:],
        np.linspace(x, hi, 2049)[1:],
    ]))
    sx = spec.S(x)
    with np.errstate(all="ignore"):
        q = sx / spec.S(z)
        v = (z - a) ** 2 * q * (1.0 - q)
    v = np.where(np.isfinite(v), v, -np.inf)
    roots = list(foc_candidates(spec, x, hi))
    cands = [bp for bp in spec.scale.breakpoints if x < bp <= hi]
    i = int(np.argmax(v))
    lo_i, hi_i = z[max(i - 1, 0)], z[min(i + 1, z.size - 1)]
    if hi_i > lo_i:
        res = optimize.minimize_scalar(lambda t: -threshold_value(spec, x, t), bounds=(lo_i, hi_i),
                                       method="bounded", options={"xatol": 1e-13 * hi_i})
        cands.append(float(res.x))
    cands.append(float(z[i]))
    if _upper_is_state(spec):
        cands.append(spec.beta)
    allc = roots + cands
    vals = [threshold_value(spec, x, t) for t in allc]
    k = int(np.argmax(vals))
    # an exact first-order root beats a grid point that ties it to rounding
    for j in range(len(roots)):
        if vals[j] >= vals[k] - 1e-13 * abs(vals[k]):
            k = j
            break
    return float(allc[k]), float(vals[k])


# ---------------------------------------------------------------------------
# regions


def center_bound(spec: DiffusionSpec, x: float) -> float:
    """``M_x = 2x + sqrt(V^{2x}(x))`` (canonical), clipped below ``beta/2`` in Case III."""
    c2 = 2.0 * x
    if _upper_is_state(spec):
        half = 0.5 * (spec.beta + spec.alpha)
        c2 = min(c2, half * (1.0 - 1e-9))
    sol = maximizer_set(spec, c2)
    if x <= sol.z_hi:
        v = sol.ratio_value * spec.S(x) + (spec.alpha - c2) ** 2
    else:
        v = majorant(spec, c2, x).value
    m = 2.0 * x + math.sqrt(max(v, 0.0))
    if _upper_is_state(spec):
        m = min(m, 0.5 * (spec.beta + spec.alpha) * (1.0 - 1e-9))
    return m


def randomization_region(spec: DiffusionSpec, c: float, z_lo: float, z_hi: float,
                         ratio_value: float | None = None) -> RandomizationRegion:
    """Start states ``(x_lo, x_hi)`` where the tie at ``c`` calls for randomization."""
    a = spec.alpha
    s_lo = (c - a) / (z_lo - a) * spec.S(z_lo)
    x_lo = spec.S_inv(s_lo, hi=z_lo)
    if math.isinf(z_hi):
        x_hi = math.inf
        a2 = False
    else:
        x_hi = spec.S_inv((c - a) / (z_hi - a) * spec.S(z_hi), hi=z_hi)
        a2 = assumption2_holds(spec, c, z_lo, z_hi)
    if ratio_value is None:
        ratio_value = maximizer_set(spec, c).ratio_value
    d_c = None
    if not a2 and math.isfinite(x_hi) and x_hi > z_lo:
        probe = 0.5 * (max(z_lo, x_lo) + x_hi)
        m = majorant(spec, c, probe, extra=(z_lo, z_hi))
        d_c = (m.a, m.b)
    return RandomizationRegion(c, z_lo, z_hi, x_lo, x_hi, a2, ratio_value, d_c)


def _region_rule(spec: DiffusionSpec, x: float, region: RandomizationRegion):
    if not region.contains(x):
        raise OutOfRegion(f"x={x} outside ({region.x_lo:.6g}, {region.x_hi:.6g})")
    a, c = spec.alpha, region.c
    second = ExitInterval(a, region.z_hi)
    m2 = exit_mean(spec, x, a, region.z_hi)
    if region.assumption2 or x <= region.z_lo:
        first = ExitInterval(a, region.z_lo)
    else:
        d = region.d_c
        if d is None or not (d[0] <= x <= d[1]):
            m = majorant(spec, c, x, extra=(region.z_lo, region.z_hi))
            d = (m.a, m.b)
        first = ExitInterval(*d)
    m1 = moments(spec, x, first)[0]
    if m1 == m2:
        raise OutOfRegion("degenerate mixture: both rules have the same mean")
    p = (c - m2) / (m1 - m2)
    if not -1e-12 <= p <= 1 + 1e-12:
        raise OutOfRegion(f"mixing weight {p:.6g} outside [0, 1] at x={x}")
    p = min(1.0, max(0.0, p))
    return p, mix(p, first, second)


def p_star(spec: DiffusionSpec, x: float, region: RandomizationRegion) -> float:
    """Mixing weight on the lower rule making the mixed mean equal to ``region.c``."""
    return _region_rule(spec, x, region)[0]


def scan_ties(spec: DiffusionSpec, c_max: float, n: int = SCAN_POINTS):
    """Tie centers up to ``c_max`` with their regions; memoized on the spec."""
    hit = spec.cache.get("regions")
    if hit is not None and hit[0] >= c_max:
        return hit[1], hit[2]
    cs = c_grid(c_max * 1e-6, c_max, n)
    ties = multi_maximizer_scan(spec, cs)
    tab = z_table(spec, c_max)
    special = _special(spec)
    regions = []
    for t in ties:
        z_hi = t.z_hi
        if special and z_hi >= 0.5 * tab.b_max:
            z_hi = math.inf
        regions.append(randomization_region(spec, t.c, t.z_lo, z_hi, t.ratio_value))
    resolution = float(np.max(np.diff(cs) / cs[1:]))
    spec.cache["regions"] = (c_max, regions, (float(cs[0]), resolution))
    return regions, (float(cs[0]), resolution)


# ---------------------------------------------------------------------------
# canonical solve


def _canonical(spec: DiffusionSpec, x: float, cls: Classification):
    tag = cls.tag
    if tag in ("CaseI", "SpecialTransientI"):
        which = "lower"
    elif tag in ("CaseII", "SpecialTransientII"):
        which = "upper"
    elif tag == "CaseIII":
        mean = exit_mean(spec, x, spec.alpha, spec.beta)
        which = "lower" if mean <= 0.5 * (spec.alpha + spec.beta) else "upper"
    else:
        raise DomainError(f"no canonical form for {tag}")
    key = ("canon", which)
    if key not in spec.cache:
        spec.cache[key] = translate_to_zero(spec) if which == "lower" else reflect(spec)
    return spec.cache[key]


@dataclass
class _Canon:
    value: float
    rule: Rule
    c_star: float
    region: Optional[RandomizationRegion] = None
    p: Optional[float] = None
    shortcut: bool = False
    notes: tuple = ()
    scan: tuple = (math.nan, math.nan)


def _special_family(spec: DiffusionSpec, x: float) -> EpsilonFamily:
    value = threshold_value(spec, x, AtInfinity)

    def build(eps: float) -> Rule:
        f = lambda lz: threshold_value(spec, x, spec.alpha + math.exp(lz)) - (value - eps)  # noqa: E731
        lo = math.log(x - spec.alpha)
        hi = lo + 1.0
        while f(hi) < 0:
            hi += 1.0
            if hi > 700:
                raise DomainError("tolerance too small for a representable threshold")
        z = spec.alpha + math.exp(optimize.brentq(f, lo + 1e-12, hi, xtol=1e-14))
        return ExitInterval(spec.alpha, z)

    return EpsilonFamily(build, value, "one-sided exits with the upper edge sent to infinity")


def _solve_canonical(spec: DiffusionSpec, x: float) -> _Canon:
    special = _special(spec)
    a = spec.alpha
    if monotonicity_check(spec):
        z = first_order_boundary(spec, x)
        if z is AtInfinity:
            fam = _special_family(spec, x)
            return _Canon(fam.value, fam, math.nan, shortcut=True)
        if z is AtBeta:
            z = spec.beta
        rule = ExitInterval(a, z)
        return _Canon(threshold_value(spec, x, z), rule, exit_mean(spec, x, a, z), shortcut=True)

    c_max = center_bound(spec, x)
    regions, scan = scan_ties(spec, c_max)
    for reg in regions:
        if special and not reg.assumption2 and x > reg.x_lo:
            raise UnsupportedMarginal(
                f"special transient case with a tie at c={reg.c:.6g} failing the tie condition"
            )
        if reg.contains(x):
            p, rule = _region_rule(spec, x, reg)
            value = reg.ratio_value * spec.S(x) + (a - reg.c) ** 2
            return _Canon(value, rule, reg.c, reg, p, scan=scan)

    tab = z_table(spec, c_max, x)
    hi = tab.b_max if not _upper_is_state(spec) else spec.beta
    z, v = best_threshold(spec, x, hi)
    if special:
        v_inf = threshold_value(spec, x, AtInfinity)
        if v_inf >= v * (1.0 - PLATEAU_RTOL):
            fam = _special_family(spec, x)
            return _Canon(fam.value, fam, math.nan, scan=scan)
    return _Canon(v, ExitInterval(a, z), exit_mean(spec, x, a, z), scan=scan)


def _infinite_family(spec: DiffusionSpec, x: float, cls: Classification) -> EpsilonFamily:
    """Exit rules whose variance exceeds ``1/eps``, growing on a diverging side."""
    a, b = spec.alpha, spec.beta
    sx = spec.S(x)

    def grow(k, side):
        if side == "upper":
            return x + (1 + abs(x)) * 2.0**k if math.isinf(b) else b - (b - x) * 2.0**-k
        return x - (1 + abs(x)) * 2.0**k if math.isinf(a) else a + (x - a) * 2.0**-k

    def anchor(side):
        end = a if side == "upper" else b
        s_end = spec.s_alpha if side == "upper" else spec.s_beta
        if math.isfinite(end) and math.isfinite(s_end):
            return end
        return x - min(1.0, 0.5 * (x - a)) if side == "upper" else x + min(1.0, 0.5 * (b - x))

    def build(eps: float) -> Rule:
        target = 1.0 / eps
        recurrent = not (cls.attractive_lower or cls.attractive_upper)
        for k in range(1, 1100):
            rules = []
            if recurrent:
                t = (1.0 + abs(sx)) * 2.0**k
                rules.append(ExitInterval(spec.S_inv(sx - t), spec.S_inv(sx + t)))
            else:
                rules.append(ExitInterval(anchor("upper"), grow(k, "upper")))
                rules.append(ExitInterval(grow(k, "lower"), anchor("lower")))
            for r in rules:
                try:
                    if moments(spec, x, r)[2] >= target:
                        return r
                except (DomainError, VarStopError):
                    continue
        raise DomainError(f"no representable rule reaches variance {target:.3g}")

    return EpsilonFamily(build, math.inf, "exit intervals with a diverging edge")


def _recurrent_family(spec: DiffusionSpec, x: float) -> EpsilonFamily:
    """Symmetric exits in scale, widened until ``(b - a)^2 >= (beta - alpha)^2 - 4 eps``."""
    span2 = (spec.beta - spec.alpha) ** 2
    sx = spec.S(x)

    def build(eps: float) -> Rule:
        need = span2 - 4.0 * eps
        t = 1.0
        for _ in range(2000):
            lo, hi = spec.S_inv(sx - t), spec.S_inv(sx + t)
            if (hi - lo) ** 2 >= need:
                return ExitInterval(lo, hi)
            t *= 1.5
        raise DomainError("tolerance below the resolution of the scale inverse")

    return EpsilonFamily(build, 0.25 * span2, "equal-probability exits approaching both endpoints")


def solve(spec: DiffusionSpec, x: float) -> VarianceSolution:
    """Value and optimal (or epsilon-optimal) rule for ``sup Var_x X_tau``."""
    x = spec.check_state(x)
    cls = classify(spec, x)
    diag = Diagnostics()
    if cls.tag == "InfiniteValue":
        fam = _infinite_family(spec, x, cls)
        return VarianceSolution(x, math.inf, fam, math.nan, cls, diagnostics=diag)
    if cls.tag == "RecurrentBounded":
        fam = _recurrent_family(spec, x)
        rule = WholeInterval(spec.alpha, spec.beta, fam)
        return VarianceSolution(x, fam.value, rule, 0.5 * (spec.alpha + spec.beta), cls, diagnostics=diag)
    if cls.tag == "UnsupportedMarginal":
        raise UnsupportedMarginal("special transient case with a failing tie condition")

    canon, m = _canonical(spec, x, cls)
    y = m.to_canonical(x)
    res = _solve_canonical(canon, y)
    rule = res.rule.pull_back(m)
    c_star = m.to_original(res.c_star) if math.isfinite(res.c_star) else math.nan
    diag.monotone_shortcut_used = res.shortcut
    diag.c_scan_min, diag.scan_resolution = res.scan
    if rule.kind not in ("epsilon", "whole_interval"):
        diag.mean_under_rule = moments(spec, x, rule)[0]
    region = None if res.region is None else res.region.pull_back(m)
    return VarianceSolution(x, res.value, rule, c_star, cls, region, res.p, diag)


def value_profile(spec: DiffusionSpec, x_grid) -> list:
    """Solve along a grid; regions are scanned once at the largest center bound needed."""
    xs = [float(v) for v in x_grid]
    if not xs:
        return []
    # warm the tie cache with the widest scan so every point reuses it
    try:
        cls = classify(spec, xs[-1])
        if cls.tag in ("CaseI", "CaseII", "SpecialTransientI", "SpecialTransientII"):
            canon, m = _canonical(spec, xs[-1], cls)
            if not monotonicity_check(canon):
                ys = [m.to_canonical(v) for v in xs]
                scan_ties(canon, max(center_bound(canon, y) for y in ys))
    except VarStopError:
        pass
    out = []
    for x in xs:
        try:
            out.append(solve(spec, x))
        except VarStopError as exc:
            out.append(SolveFailure(x, exc))
    return out
