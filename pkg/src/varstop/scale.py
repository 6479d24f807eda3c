"""Scale functions: evaluation, derivatives, endpoint limits and inversion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, LimitUndetermined, NonMonotoneScale

FD_REL_STEP = 1e-6
INVERSE_REL_TOL = 1e-12
INVERSE_MAX_ITER = 64
SCREEN_POINTS = 1024
MONOTONE_RTOL = 1e-9


@dataclass(frozen=True)
class ScaleLimits:
    """Declared endpoint limits; ``None`` means "extrapolate numerically".

    ``lower``/``upper`` are limits of the raw scale function at the endpoints.
    ``upper_sq`` is ``lim b**2 / S(b)`` at an upper endpoint with ``S(beta) = inf``;
    ``lower_sq`` is ``lim a**2 / -S(a)`` at a lower endpoint with ``S(alpha) = -inf``.
    """

    lower: Optional[float] = None
    upper: Optional[float] = None
    upper_sq: Optional[float] = None
    lower_sq: Optional[float] = None


class PiecewiseFunction:
    """Vectorized piecewise function on ``[b_{i-1}, b_i)`` pieces.

    0/0 points inside a piece (removable singularities of rational pieces)
    are repaired by averaging the two neighbouring values.
    """

    def __init__(self, breakpoints: Sequence[float], pieces: Sequence[Callable]):
        if len(pieces) != len(breakpoints) + 1:
            raise ValueError("need exactly one more piece than breakpoints")
        bps = [float(b) for b in breakpoints]
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        self.breakpoints = tuple(bps)
        self.pieces = tuple(pieces)

    def _raw(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right")
        out = np.empty_like(x)
        with np.errstate(all="ignore"):
            for k, piece in enumerate(self.pieces):
                mask = idx == k
                if mask.any():
                    out[mask] = np.broadcast_to(piece(x[mask]), x[mask].shape)
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = self._raw(x)
        bad = np.isnan(out) & np.isfinite(x)
        if bad.any():
            xb = x[bad]
            h = 1e-7 * np.maximum(1.0, np.abs(xb))
            out[bad] = 0.5 * (self._raw(xb - h) + self._raw(xb + h))
        return out[0] if scalar else out


@dataclass(frozen=True)
class ScaleModel:
    """A strictly increasing scale function ``S``; ``eval`` subtracts ``offset``."""

    func: Callable
    deriv: Optional[Callable] = None
    kind: str = "closed-form"
    breakpoints: tuple = ()
    offset: float = 0.0
    limits: ScaleLimits = field(default_factory=ScaleLimits)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            val = np.asarray(self.func(x), dtype=float) - self.offset
        return float(val) if val.ndim == 0 else val

    def shifted(self, offset: float) -> "ScaleModel":
        """Same function with ``S(alpha) = 0`` re-anchored by ``offset``."""
        return replace(self, offset=self.offset + offset)

    def scaled(self, lam: float) -> "ScaleModel":
        """``lam * S`` for ``lam > 0``."""
        if lam <= 0:
            raise ValueError("scale multiplier must be positive")
        f, d, off = self.func, self.deriv, self.offset
        lim = self.limits

        def mul(v):
            return None if v is None else lam * v

        def div(v):
            return None if v is None else v / lam

        return ScaleModel(
            func=lambda x: lam * (np.asarray(f(x), dtype=float) - off),
            deriv=None if d is None else (lambda x: lam * np.asarray(d(x), dtype=float)),
            kind=self.kind,
            breakpoints=self.breakpoints,
            limits=ScaleLimits(
                lower=None if lim.lower is None else lam * (lim.lower - off),
                upper=None if lim.upper is None else lam * (lim.upper - off),
                upper_sq=div(lim.upper_sq),
                lower_sq=div(lim.lower_sq),
            ),
        )

    def derivative(self, x):
        """``S'(x)``; central differences with one-sided stencils at breakpoints."""
        if self.deriv is not None:
            with np.errstate(all="ignore"):
                val = np.asarray(self.deriv(np.asarray(x, dtype=float)), dtype=float)
            return float(val) if val.ndim == 0 else val
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        h = FD_REL_STEP * np.maximum(np.abs(x), 1e-6)
        out = (self(x + h) - self(x - h)) / (2 * h)
        for bp in self.breakpoints:
            right = (x - h < bp) & (bp <= x)
            left = (x < bp) & (bp < x + h)
            if right.any():
                xr, hr = x[right], h[right]
                out[right] = (-3 * self(xr) + 4 * self(xr + hr) - self(xr + 2 * hr)) / (2 * hr)
            if left.any():
                xl, hl = x[left], h[left]
                out[left] = (3 * self(xl) - 4 * self(xl - hl) + self(xl - 2 * hl)) / (2 * hl)
        return float(out[0]) if scalar else out

    def near_breakpoint(self, x, rel=1e-5):
        x = np.asarray(x, dtype=float)
        near = np.zeros(x.shape, dtype=bool)
        for bp in self.breakpoints:
            near |= np.abs(x - bp) <= rel * max(1.0, abs(bp))
        return near


# ---------------------------------------------------------------------------
# endpoint extrapolation


def _approach(endpoint: float, inner: float, k_max: int = 200) -> np.ndarray:
    """Geometric sequence of states from ``inner`` towards ``endpoint``."""
    if math.isinf(endpoint):
        sign = 1.0 if endpoint > 0 else -1.0
        base = max(1.0, abs(inner))
        ks = np.arange(k_max)
        return inner + sign * base * np.exp2(ks)
    gap = inner - endpoint
    floor = 64 * np.finfo(float).eps * max(1.0, abs(endpoint))
    k_lim = int(min(k_max, math.floor(math.log2(abs(gap) / floor)))) if abs(gap) > floor else 1
    ks = np.arange(max(k_lim, 2))
    return endpoint + gap * np.exp2(-ks)


def scale_endpoint_limit(S: Callable, endpoint: float, inner: float) -> float:
    """Limit of a monotone ``S`` at ``endpoint`` by geometric-tail extrapolation.

    Successive differences along a halving (or doubling) sequence are tested
    for geometric decay; a decaying tail is summed in closed form, otherwise
    the limit is infinite. Raises ``LimitUndetermined`` when neither holds.
    """
    pts = _approach(endpoint, inner)
    vals = np.asarray(S(pts), dtype=float)
    sign = 1.0 if endpoint > inner else -1.0
    bad = ~np.isfinite(vals)
    if bad.any():
        first = int(np.argmax(bad))
        v = vals[first]
        if np.isinf(v):
            return float(v)
        vals = vals[:first]
        if vals.size < 12:
            raise LimitUndetermined(f"scale not evaluable near {endpoint}")
    if np.abs(vals[-1]) > 1e250:
        return sign * math.inf
    d = np.diff(vals)
    tail = np.abs(d[-10:])
    if np.all(tail == 0):
        return float(vals[-1])
    if np.any(tail[1:] == 0) and tail[-1] == 0:
        return float(vals[-1])
    with np.errstate(all="ignore"):
        rho = tail[1:] / tail[:-1]
    if np.all(rho <= 0.9):
        r = float(np.median(rho[-4:]))
        return float(vals[-1] + d[-1] * r / (1.0 - r))
    # floating-point floor: differences collapse to rounding noise
    if abs(d[-1]) <= 1e-13 * max(1.0, abs(vals[-1])) and np.all(rho[:-4] <= 0.9):
        return float(vals[-1])
    if np.all(rho >= 0.999):
        return sign * math.inf
    if vals.size >= 150 and np.all(np.abs(d[-20:]) >= 0.99 * np.abs(d[-21:-1])):
        return sign * math.inf
    raise LimitUndetermined(
        f"scale limit at {endpoint} is ambiguous (difference ratios {rho[-3:]})"
    )


def squared_ratio_limit(S: Callable, endpoint: float, inner: float, anchor: float) -> float:
    """``lim (y - anchor)**2 / |S(y)|`` as ``y`` runs to an infinite endpoint.

    Returns 0, a finite positive value, or ``inf``. Log-slope of the ratio
    per doubling decides the regime.
    """
    pts = _approach(endpoint, inner, k_max=120)
    with np.errstate(all="ignore"):
        s = np.abs(np.asarray(S(pts), dtype=float))
        g = (pts - anchor) ** 2 / s
    g = np.where(np.isinf(s), 0.0, g)
    g = g[np.isfinite(g)]
    if g.size < 20:
        raise LimitUndetermined("squared ratio not evaluable")
    if g[-1] == 0.0:
        return 0.0
    if np.all(g[-10:] > 0):
        w = np.log(g)
        dw = np.diff(w)[-12:]
        if np.all(dw < -0.02) or g[-1] < 1e-14 * g.max():
            return 0.0
        if np.all(dw > 0.02) or g[-1] > 1e250:
            return math.inf
        if np.all(np.abs(dw) < 1e-9):
            return float(g[-1])
        if np.all(np.abs(dw) < 1e-5):
            steps = np.abs(dw)
            rho = steps[1:] / steps[:-1]
            if np.all(rho < 0.9):
                r = float(np.median(rho[-4:]))
                return float(math.exp(w[-1] + (w[-1] - w[-2]) * r / (1 - r)))
    raise LimitUndetermined(f"squared ratio limit at {endpoint} is ambiguous")


# ---------------------------------------------------------------------------
# grids and screening


def probe_grid(alpha: float, beta: float, n: int = SCREEN_POINTS, center: float | None = None) -> np.ndarray:
    """Points inside ``(alpha, beta)`` clustered toward both endpoints."""
    fa, fb = math.isfinite(alpha), math.isfinite(beta)
    if fa and fb:
        span = beta - alpha
        t_lin = np.linspace(0.0, 1.0, n // 2 + 2)[1:-1]
        t_log = np.geomspace(1e-9, 0.5, n // 4)
        t = np.concatenate([t_lin, t_log, 1.0 - t_log])
        pts = alpha + span * t
    elif fa:
        base = max(1.0, abs(alpha)) if center is None else max(center - alpha, 1e-3)
        u = np.concatenate([np.geomspace(1e-9 * base, 1e9 * base, n * 3 // 4),
                            np.linspace(0, 10 * base, n // 4 + 1)[1:]])
        pts = alpha + u
    elif fb:
        base = max(1.0, abs(beta)) if center is None else max(beta - center, 1e-3)
        u = np.concatenate([np.geomspace(1e-9 * base, 1e9 * base, n * 3 // 4),
                            np.linspace(0, 10 * base, n // 4 + 1)[1:]])
        pts = beta - u
    else:
        c = 0.0 if center is None else center
        u = np.geomspace(1e-6, 1e9, n // 2)
        pts = np.concatenate([c - u, [c], c + u])
    pts = pts[(pts > alpha) & (pts < beta)]
    return np.unique(pts)


def screen_monotone(S: ScaleModel, alpha: float, beta: float, n: int = SCREEN_POINTS,
                    center: float | None = None) -> None:
    """Raise ``NonMonotoneScale`` unless ``S`` increases strictly on a probe grid."""
    for bp in S.breakpoints:
        if alpha < bp < beta:
            h = 1e-9 * max(1.0, abs(bp))
            left, at = S(bp - h), S(bp)
            if left > at + 1e-12 * max(1.0, abs(at)):
                raise NonMonotoneScale(
                    f"scale drops across breakpoint {bp:g} ({left:.6g} -> {at:.6g})"
                )
    pts = probe_grid(alpha, beta, n, center)
    vals = S(pts)
    finite = np.isfinite(vals)
    pts, vals = pts[finite], vals[finite]
    d = np.diff(vals)
    scale = np.maximum(np.abs(vals[1:]), np.abs(vals[:-1]))
    suspects = np.nonzero(d <= 1e-14 * scale)[0]
    for i in suspects:
        # stay off the probe points: a point a few ulps from a removable 0/0 is noise
        sub = pts[i] + (pts[i + 1] - pts[i]) * np.linspace(1e-6, 1.0 - 1e-6, 17)
        sv = S(sub)
        sd = np.diff(sv)
        tol = MONOTONE_RTOL * np.maximum(np.abs(sv[1:]), 1e-300)
        if np.any(sd < -tol) or np.all(sd <= 0):
            raise NonMonotoneScale(
                f"scale is not strictly increasing on [{pts[i]:.6g}, {pts[i + 1]:.6g}]"
            )


def invert(S: Callable, target: float, lo: float, hi: float,
           rel_tol: float = INVERSE_REL_TOL, max_iter: int = INVERSE_MAX_ITER) -> float:
    """Bisection for ``S(y) = target`` on ``[lo, hi]`` with ``S`` increasing."""
    if not (lo <= hi):
        raise DomainError("empty inversion bracket")
    tol = rel_tol * (hi - lo)
    s_lo, s_hi = S(lo), S(hi)
    if target <= s_lo:
        return lo
    if target >= s_hi:
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if S(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)
