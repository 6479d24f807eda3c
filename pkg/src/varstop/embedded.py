"""The embedded quadratic problem ``sup E_x[(X_tau - c)^2]`` in canonical coordinates.

Every function here expects a spec with ``S(alpha) = 0`` (Case I, or the lower
branch of Case III). The ratio ``R(z; c) = (z^2 - alpha^2 - 2c(z - alpha)) / S(z)``
governs one-sided rules; two-sided stopping sets come from the least concave
majorant of the payoff in natural scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from . import kernels
from .diffusion import DiffusionSpec, exit_mean
from .errors import (
    DomainError,
    NoMaximizer,
    ResolutionWarning,
    StartAboveMaximizer,
    TruncationError,
)

PLATEAU_RTOL = 1e-10
PEAK_SCREEN_RTOL = 1e-3
LOG_POINTS = 2048
LIN_POINTS = 1024
DECAY_RTOL = 1e-6
CEILING_DOUBLINGS = 40
LCM_POINTS = 10_000
CONTACT_RTOL = 1e-10


def ratio(spec: DiffusionSpec, z, c: float):
    """``(z^2 - alpha^2 - 2c(z - alpha)) / S(z)``."""
    z = np.asarray(z, dtype=float)
    a = spec.alpha
    with np.errstate(all="ignore"):
        out = (z * z - a * a - 2.0 * c * (z - a)) / spec.S(z)
    if np.any((z <= a) | (z > spec.beta)):
        raise DomainError("ratio needs alpha < z <= beta")
    return float(out) if out.ndim == 0 else out


def _check_canonical(spec: DiffusionSpec):
    if spec.s_alpha != 0.0:
        raise DomainError("embedded problem needs S(alpha) = 0")


def _special(spec: DiffusionSpec) -> bool:
    """Finite positive ``lim z^2 / S(z)`` at an infinite upper endpoint."""
    if math.isfinite(spec.beta) or math.isfinite(spec.s_beta):
        return False
    sq, _ = spec.squared_limit("upper")
    return 0.0 < sq < math.inf


def _upper_is_limit(spec: DiffusionSpec) -> bool:
    """Finite ``beta`` with infinite scale: a limit point of thresholds, never hit."""
    return math.isfinite(spec.beta) and math.isinf(spec.s_beta)


def _upper_is_state(spec: DiffusionSpec) -> bool:
    """True when beta is reachable (finite with finite scale)."""
    return math.isfinite(spec.beta) and math.isfinite(spec.s_beta)


# ---------------------------------------------------------------------------
# state grid


@dataclass
class ZTable:
    z: np.ndarray
    S: np.ndarray
    A: np.ndarray  # (z^2 - alpha^2) / S
    B: np.ndarray  # 2 (z - alpha) / S
    b_max: float
    truncated: bool


def _decay_bmax(spec: DiffusionSpec, u0: float) -> tuple[float, bool]:
    """Doubling search for the point where ``z^2/S(z)`` has decayed by ``DECAY_RTOL``."""
    a = spec.alpha
    u = u0
    best = 0.0
    for _ in range(CEILING_DOUBLINGS):
        s = spec.S(a + u)
        g = u * u / s if math.isfinite(s) else 0.0
        best = max(best, g)
        if g < DECAY_RTOL * best:
            return a + u, False
        u *= 2.0
    return a + u, True


def _state_points(spec: DiffusionSpec, b_max: float, extra=()) -> np.ndarray:
    a, b = spec.alpha, spec.beta
    span = b_max - a
    pts = [
        a + span * np.geomspace(1e-9, 1.0, LOG_POINTS),
        a + np.linspace(0.0, span, LIN_POINTS + 1)[1:],
    ]
    if math.isfinite(b) and b_max >= b:
        pts.append(b - (b - a) * np.geomspace(1e-12, 0.5, LOG_POINTS // 8))
    bps = [bp for bp in spec.scale.breakpoints if a < bp < b_max]
    pts.append(np.asarray(bps + [e for e in extra if a < e <= b_max], dtype=float))
    z = np.unique(np.concatenate(pts))
    z = z[(z > a) & (z <= b_max)]
    if z[-1] == b and not _upper_is_state(spec):
        z = z[:-1]
    return z


def z_table(spec: DiffusionSpec, c_max: float, x: float | None = None) -> ZTable:
    """Sampled ``(z, S, A, B)`` covering maximizers for centers up to ``c_max``.

    Memoized on the spec; a request with a larger ``c_max`` rebuilds it.
    """
    _check_canonical(spec)
    a = spec.alpha
    u0 = max(2.0 * (c_max - a), (x - a) if x is not None else 0.0, 1e-12)
    key = spec.cache.get("ztable")
    if key is not None and key[0] >= u0:
        return key[1]
    if math.isfinite(spec.beta):
        b_max, truncated = spec.beta, False
    else:
        b_max, truncated = _decay_bmax(spec, 2.0 * u0)
    z = _state_points(spec, b_max)
    S = np.asarray(spec.S(z), dtype=float)
    keep = np.isfinite(S) & (S > 0)
    z, S = z[keep], S[keep]
    A = (z * z - a * a) / S
    B = 2.0 * (z - a) / S
    if _upper_is_limit(spec):
        # beta is never reached: R tends to 0 there, attained by never exiting upward
        z, S = np.append(z, spec.beta), np.append(S, math.inf)
        A, B = np.append(A, 0.0), np.append(B, 0.0)
    tab = ZTable(z, S, A, B, b_max, truncated)
    spec.cache["ztable"] = (u0, tab)
    return tab


# ---------------------------------------------------------------------------
# maximizers


@dataclass(frozen=True)
class EmbeddedSolution:
    c: float
    maximizers: tuple
    z_lo: float
    z_hi: float
    ratio_value: float
    at_infinity: bool = False
    spec: Optional[DiffusionSpec] = field(default=None, compare=False, repr=False)

    def value_at(self, x: float) -> float:
        """``V^c(x)``; beyond ``z_hi`` the natural-scale majorant is used."""
        if x <= self.z_hi or self.at_infinity:
            return embedded_value_from(self, self.spec, x)
        return majorant(self.spec, self.c, x).value


def _refine(spec: DiffusionSpec, c: float, lo: float, hi: float, z0: float):
    """Best point of ``R(.; c)`` on ``[lo, hi]``: bounded Brent plus kinks."""
    cands = [z0]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda t: -ratio(spec, t, c),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, abs(hi))},
        )
        cands.append(float(res.x))
        cands.extend(bp for bp in spec.scale.breakpoints if lo <= bp <= hi)
        cands.extend((lo, hi))
        polished = _stationary(spec, c, lo, hi, float(res.x))
        if polished is not None:
            cands.append(polished)
    vals = [ratio(spec, t, c) for t in cands]
    k = int(np.nanargmax(vals))
    if hi > lo and polished is not None:
        # at a smooth peak the stationary point wins ties at rounding level
        pv = vals[-1]
        if pv >= vals[k] - 1e-13 * max(abs(vals[k]), 1e-300):
            k = len(vals) - 1
    return float(cands[k]), float(vals[k])


def _polish_root(G, z0: float, lo: float, hi: float, breakpoints=()):
    """Bracketed root of ``G`` near ``z0`` inside ``[lo, hi]``, or ``None``."""
    if any(lo - 1e-9 * abs(lo) <= bp <= hi + 1e-9 * abs(hi) for bp in breakpoints):
        return None
    w = max(1e-6 * max(abs(z0), 1.0), 16 * np.finfo(float).eps * abs(z0))
    l, r = max(lo, z0 - w), min(hi, z0 + w)
    if not r > l:
        return None
    try:
        gl, gr = G(l), G(r)
    except DomainError:
        return None
    if not (np.isfinite(gl) and np.isfinite(gr)) or gl * gr > 0:
        return None
    if gl == 0:
        return l
    if gr == 0:
        return r
    return optimize.brentq(G, l, r, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def _stationary(spec: DiffusionSpec, c: float, lo: float, hi: float, z0: float):
    """Root of ``dR/dz`` near ``z0`` when ``S`` is smooth on ``[lo, hi]``.

    Value-based search only fixes a flat peak to about ``sqrt(eps)``; the
    first-order condition ``2(z - c) S - (z^2 - 2cz) S' = 0`` pins it to
    rounding level.
    """
    a = spec.alpha

    def G(z):
        with np.errstate(invalid="ignore"):
            return 2.0 * (z - c) * spec.S(z) - (z * z - a * a - 2.0 * c * (z - a)) * spec.dS(z)

    return _polish_root(G, z0, lo, hi, spec.scale.breakpoints)


def _local_peaks(R: np.ndarray) -> np.ndarray:
    left = np.concatenate(([-np.inf], R[:-1]))
    right = np.concatenate((R[1:], [-np.inf]))
    return np.nonzero((R >= left) & (R >= right))[0]


def _peaks(spec: DiffusionSpec, tab: ZTable, c: float, screen: float = PEAK_SCREEN_RTOL):
    """Refined local maxima of ``R(.; c)`` within ``screen`` of the grid maximum."""
    R = tab.A - c * tab.B
    top = float(np.max(R))
    tol = screen * max(abs(top), 1e-300)
    idx = [i for i in _local_peaks(R) if R[i] >= top - tol]
    z = tab.z
    out = []
    for i in idx:
        lo = z[i - 1] if i > 0 else 0.5 * (spec.alpha + z[0])
        hi = z[i + 1] if i + 1 < z.size else z[i]
        zi, vi = _refine(spec, c, lo, hi, z[i])
        out.append((zi, vi, i))
    return out, R


def _merge(peaks, best):
    """Peaks tying with ``best`` (plateau tolerance), distinct up to 1e-8 relative."""
    tol = PLATEAU_RTOL * max(abs(best), 1e-300)
    zs = sorted(float(z) for z, v, _ in peaks if v >= best - tol)
    merged = []
    for z in zs:
        if not merged or z - merged[-1] > 1e-8 * max(1.0, abs(z)):
            merged.append(z)
    return tuple(merged)


def maximizer_set(spec: DiffusionSpec, c: float, c_max: float | None = None) -> EmbeddedSolution:
    """Global maximizers of ``R(.; c)`` by grid scan and local refinement."""
    _check_canonical(spec)
    tab = z_table(spec, max(c, c_max or c))
    peaks, R = _peaks(spec, tab, c)
    best = max(v for _, v, _ in peaks)
    special = _special(spec)
    last = tab.z.size - 1
    ends_at_grid_edge = any(i == last for _, _, i in peaks)

    if special:
        limit = spec.squared_limit("upper")[0]
        # a finite peak must dip below itself before R climbs back to the limit
        dip = 1e-6 * max(abs(limit), 1e-300)
        finite_peaks = [p for p in peaks if p[2] < last and np.min(R[p[2]:]) < p[1] - dip]
        fbest = max((v for _, v, _ in finite_peaks), default=-math.inf)
        tol = PLATEAU_RTOL * max(abs(limit), 1e-300)
        if fbest > limit + tol:
            zs = _merge(finite_peaks, fbest)
            return EmbeddedSolution(c, zs, zs[0], zs[-1], fbest, False, spec)
        zs = _merge(finite_peaks, limit) if fbest >= limit - tol else ()
        zs = zs + (math.inf,)
        return EmbeddedSolution(c, zs, zs[0], math.inf, limit, True, spec)

    if ends_at_grid_edge and not (_upper_is_state(spec) or _upper_is_limit(spec)):
        if tab.truncated:
            raise NoMaximizer(f"ratio still increasing at z={tab.z[-1]:.6g} (grid ceiling)")
        raise TruncationError(f"maximizer at the grid edge z={tab.z[-1]:.6g}")
    zs = _merge(peaks, best)
    return EmbeddedSolution(c, zs, zs[0], zs[-1], best, False, spec)


def embedded_value_from(sol: EmbeddedSolution, spec: DiffusionSpec, x: float) -> float:
    if x > sol.z_hi:
        raise StartAboveMaximizer(f"x={x} exceeds the greatest maximizer {sol.z_hi}")
    return sol.ratio_value * spec.S(x) + (spec.alpha - sol.c) ** 2


def embedded_value(spec: DiffusionSpec, x: float, c: float) -> float:
    """``V^c(x) = R* S(x) + (alpha - c)^2`` for ``x`` not above ``z_hi(c)``."""
    x = spec.check_state(x)
    return embedded_value_from(maximizer_set(spec, c), spec, x)


def assumption2_holds(spec: DiffusionSpec, c: float, z_lo: float, z_hi: float) -> bool:
    """Tie condition: the exit mean of ``(alpha, z_hi)`` from ``z_lo`` exceeds ``c``."""
    if math.isinf(z_hi):
        return False
    return exit_mean(spec, z_lo, spec.alpha, z_hi) > c


# ---------------------------------------------------------------------------
# scan over centers


@dataclass(frozen=True)
class Tie:
    c: float
    z_lo: float
    z_hi: float
    ratio_value: float


def c_grid(c_min: float, c_max: float, n: int = 1024) -> np.ndarray:
    return np.unique(np.concatenate([np.geomspace(c_min, c_max, n), np.linspace(c_min, c_max, n)]))


def greatest_maximizer_path(spec: DiffusionSpec, cs: np.ndarray):
    """Grid value and greatest grid argmax of ``R(.; c)`` for each ``c``."""
    tab = z_table(spec, float(np.max(cs)))
    vals, idx = kernels.envelope_argmax(tab.A, tab.B, np.ascontiguousarray(cs, dtype=float))
    return tab, np.asarray(vals), np.asarray(idx)


def _window(tab: ZTable, i: int, k: int = 8):
    lo = tab.z[max(i - k, 0)] if i - k >= 0 else 0.5 * tab.z[0]
    hi = tab.z[min(i + k, tab.z.size - 1)]
    return lo, hi


def _tracked(spec, tab, i, c):
    lo, hi = _window(tab, i)
    j0 = i
    return _refine(spec, c, lo, hi, tab.z[j0])


def multi_maximizer_scan(spec: DiffusionSpec, cs) -> list[Tie]:
    """Centers where the greatest maximizer jumps, located to a tie by root finding."""
    cs = np.asarray(cs, dtype=float)
    cs = cs[(cs > spec.alpha)]
    if math.isfinite(spec.beta):
        cs = cs[cs < 0.5 * (spec.alpha + spec.beta)]
    if cs.size < 2:
        return []
    tab, _, idx = greatest_maximizer_path(spec, cs)
    zc = tab.z[idx] - spec.alpha
    dlz = np.abs(np.diff(np.log(zc)))
    dlc = np.diff(np.log(cs - spec.alpha))
    flagged = np.nonzero(dlz > np.maximum(0.05, 10.0 * dlc))[0]
    if flagged.size > 1 and np.any(np.diff(flagged) == 1):
        warnings.warn("adjacent maximizer jumps; ties may be closer than the c-grid spacing",
                      ResolutionWarning, stacklevel=2)
    ties = []
    for k in flagged:
        c0, c1 = cs[k], cs[k + 1]
        i0, i1 = int(idx[k]), int(idx[k + 1])
        if i1 < i0:
            continue  # downward jumps do not occur for the greatest maximizer in Case I

        def gap(c):
            return _tracked(spec, tab, i1, c)[1] - _tracked(spec, tab, i0, c)[1]

        g0, g1 = gap(c0), gap(c1)
        if not (g0 <= 0 <= g1):
            warnings.warn(f"no tie bracket in [{c0:.6g}, {c1:.6g}]", ResolutionWarning, stacklevel=2)
            continue
        if g0 == 0:
            ct = c0
        elif g1 == 0:
            ct = c1
        else:
            ct = optimize.brentq(gap, c0, c1, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        z_lo, v_lo = _tracked(spec, tab, i0, ct)
        z_hi, v_hi = _tracked(spec, tab, i1, ct)
        ties.append(Tie(float(ct), float(z_lo), float(z_hi), float(max(v_lo, v_hi))))
    return ties


# ---------------------------------------------------------------------------
# stopping set via the least concave majorant


@dataclass(frozen=True)
class Majorant:
    """Natural-scale majorant evaluated at ``x`` and the contact interval around it."""

    c: float
    x: float
    a: float
    b: float
    value: float
    contains_start: bool


def _lcm_grid(spec: DiffusionSpec, c: float, b_max: float, extra) -> np.ndarray:
    a = spec.alpha
    span = b_max - a
    pts = [
        np.array([a]),
        a + span * np.geomspace(1e-9, 1.0, LCM_POINTS // 2),
        a + np.linspace(0.0, span, LCM_POINTS // 2 + 1)[1:],
        np.asarray([e for e in extra if a < e <= b_max], dtype=float),
        np.asarray([bp for bp in spec.scale.breakpoints if a < bp < b_max], dtype=float),
    ]
    if math.isfinite(spec.beta) and b_max >= spec.beta:
        pts.append(spec.beta - (spec.beta - a) * np.geomspace(1e-12, 0.5, 512))
    y = np.unique(np.concatenate(pts))
    y = y[(y >= a) & (y <= b_max)]
    if y[-1] == spec.beta and not _upper_is_state(spec):
        y = y[:-1]
    return y


def _chord_refine(spec, c, ya, yb, lo_a, hi_a, lo_b, hi_b):
    """Alternate tangency conditions to place chord ends between grid nodes."""
    def h(y):
        return (y - c) ** 2

    S = spec.S
    for _ in range(20):
        sb, hb = S(yb), h(yb)
        if hi_a > lo_a:
            res = optimize.minimize_scalar(
                lambda y: -(h(y) - hb) / (sb - S(y)), bounds=(lo_a, min(hi_a, yb)), method="bounded",
                options={"xatol": 1e-13 * max(1.0, abs(hi_a))})
            cand = [ya, float(res.x)] + [bp for bp in spec.scale.breakpoints if lo_a <= bp <= hi_a]
            ya_new = max(cand, key=lambda y: (h(y) - hb) / (sb - S(y)) if y < yb else -np.inf)
        else:
            ya_new = ya
        sa, ha = S(ya_new), h(ya_new)
        if hi_b > lo_b:
            res = optimize.minimize_scalar(
                lambda y: -(h(y) - ha) / (S(y) - sa), bounds=(max(lo_b, ya_new), hi_b), method="bounded",
                options={"xatol": 1e-13 * max(1.0, abs(hi_b))})
            cand = [yb, float(res.x)] + [bp for bp in spec.scale.breakpoints if lo_b <= bp <= hi_b]
            yb_new = max(cand, key=lambda y: (h(y) - ha) / (S(y) - sa) if y > ya_new else -np.inf)
        else:
            yb_new = yb
        ya_new = _tangent_polish(spec, c, ya_new, yb_new, lo_a, min(hi_a, yb_new), moving="a")
        yb_new = _tangent_polish(spec, c, ya_new, yb_new, max(lo_b, ya_new), hi_b, moving="b")
        done = abs(ya_new - ya) <= 1e-14 * max(1.0, abs(ya)) and abs(yb_new - yb) <= 1e-14 * max(1.0, abs(yb))
        ya, yb = ya_new, yb_new
        if done:
            break
    return ya, yb


def _tangent_polish(spec, c, ya, yb, lo, hi, moving):
    """Solve the tangency ``h'(y)(S(y) - s_o) = (h(y) - h_o) S'(y)`` for one chord end."""
    y0, other = (ya, yb) if moving == "a" else (yb, ya)
    if not (lo < y0 < hi) or y0 in (spec.alpha, spec.beta):
        return y0
    so, ho = spec.S(other), (other - c) ** 2

    def G(y):
        return 2.0 * (y - c) * (spec.S(y) - so) - ((y - c) ** 2 - ho) * spec.dS(y)

    root = _polish_root(G, y0, lo, hi, spec.scale.breakpoints)
    return y0 if root is None else float(root)


def majorant(spec: DiffusionSpec, c: float, x: float, extra=()) -> Majorant:
    """Least concave majorant of ``s -> (S^{-1}(s) - c)^2`` read at ``S(x)``."""
    _check_canonical(spec)
    x = spec.check_state(x)
    if math.isfinite(spec.beta):
        b_max, ceiling = spec.beta, spec.beta
    else:
        b_max, _ = _decay_bmax(spec, 2.0 * max(x - spec.alpha, 2.0 * (c - spec.alpha), 1e-12))
        ceiling = spec.alpha + (b_max - spec.alpha) * 2.0**12
    while True:
        y = _lcm_grid(spec, c, b_max, tuple(extra) + (x,))
        s = np.asarray(spec.S(y), dtype=float)
        keep = np.isfinite(s)
        y, s = y[keep], s[keep]
        h = (y - c) ** 2
        verts = np.asarray(kernels.upper_hull(s, h))
        hull = np.interp(s, s[verts], h[verts])
        contact = hull - h <= CONTACT_RTOL * np.maximum(1.0, np.abs(h))
        ix = int(np.searchsorted(y, x))
        if contact[ix] and y[ix] == x:
            return _contact_component(spec, c, x, y, contact, ix, h)
        left = np.nonzero(contact[:ix])[0]
        right = np.nonzero(contact[ix:])[0] + ix
        ia, ib = int(left[-1]), int(right[0])
        if ib == y.size - 1 and not _upper_is_state(spec):
            if b_max >= ceiling:
                raise TruncationError(f"majorant still changing at b_max={b_max:.6g}")
            b_max = spec.alpha + 4.0 * (b_max - spec.alpha)
            continue
        break
    lo_a = y[ia - 1] if ia > 0 else y[ia]
    hi_a = y[min(ia + 1, ix)]
    lo_b = y[max(ib - 1, ix)]
    hi_b = y[ib + 1] if ib + 1 < y.size else y[ib]
    ya, yb = _chord_refine(spec, c, y[ia], y[ib], lo_a, hi_a, lo_b, hi_b)
    sa, sb, sx = spec.S(ya), spec.S(yb), spec.S(x)
    w = (sx - sa) / (sb - sa)
    value = (1 - w) * (ya - c) ** 2 + w * (yb - c) ** 2
    return Majorant(c, x, float(ya), float(yb), float(value), False)


def _contact_component(spec, c, x, y, contact, ix, h) -> Majorant:
    """Run of contact points containing ``x``; edges refined against the adjoining chords."""
    i0 = ix
    while i0 > 0 and contact[i0 - 1]:
        i0 -= 1
    i1 = ix
    while i1 + 1 < y.size and contact[i1 + 1]:
        i1 += 1
    a, b = float(y[i0]), float(y[i1])
    if i0 > 0:
        left = np.nonzero(contact[:i0])[0]
        if left.size:
            ia = int(left[-1])
            lo_a = y[ia - 1] if ia > 0 else y[ia]
            _, a = _chord_refine(spec, c, y[ia], y[i0], lo_a, y[ia + 1], y[i0 - 1], y[min(i0 + 1, ix)])
    if i1 == y.size - 1 and not _upper_is_state(spec):
        b = spec.beta
    elif i1 + 1 < y.size:
        right = np.nonzero(contact[i1 + 1:])[0]
        if right.size:
            ib = int(right[0]) + i1 + 1
            hi_b = y[ib + 1] if ib + 1 < y.size else y[ib]
            b, _ = _chord_refine(spec, c, y[i1], y[ib], y[max(i1 - 1, ix)], y[i1 + 1], y[ib - 1], hi_b)
    return Majorant(c, x, float(min(a, x)), float(max(b, x)), float(h[ix]), True)


def stopping_set(spec: DiffusionSpec, c: float, x: float):
    """Contact interval of ``D_c`` bracketing ``x``, as ``(a, b)``."""
    m = majorant(spec, c, x)
    return m.a, m.b


def majorant_profile(spec: DiffusionSpec, c: float, b_max: float, n: int = LCM_POINTS):
    """``(y, s, payoff, majorant)`` on a grid; used by invariant checks."""
    y = _lcm_grid(spec, c, b_max, ())
    s = np.asarray(spec.S(y), dtype=float)
    keep = np.isfinite(s)
    y, s = y[keep], s[keep]
    h = (y - c) ** 2
    verts = np.asarray(kernels.upper_hull(s, h))
    return y, s, h, np.interp(s, s[verts], h[verts])
