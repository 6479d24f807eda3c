"""Linear diffusions described by their scale function.

Exit laws, regime classification, and the translation/reflection transforms
that bring every supported regime to canonical coordinates with ``alpha = 0``
and ``S(0) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, Unbounded
from .scale import (
    ScaleLimits,
    ScaleModel,
    invert,
    scale_endpoint_limit,
    screen_monotone,
    squared_ratio_limit,
)

BEHAVIORS = ("natural", "exit", "entrance", "killing", "absorbing", "regular")


@dataclass(frozen=True)
class StateInterval:
    alpha: float
    beta: float
    lower_behavior: str = "natural"
    upper_behavior: str = "natural"

    def __post_init__(self):
        if not (self.alpha < self.beta):
            raise DomainError(f"empty state interval ({self.alpha}, {self.beta})")
        for tag in (self.lower_behavior, self.upper_behavior):
            if tag not in BEHAVIORS:
                raise DomainError(f"unknown boundary behaviour {tag!r}")

    def contains(self, x) -> bool:
        return bool(self.alpha < x < self.beta)

    @property
    def span(self) -> float:
        return self.beta - self.alpha

    @property
    def finite(self) -> bool:
        return math.isfinite(self.alpha) and math.isfinite(self.beta)

    def interior_point(self) -> float:
        a, b = self.alpha, self.beta
        if math.isfinite(a) and math.isfinite(b):
            return 0.5 * (a + b)
        if math.isfinite(a):
            return a + 1.0
        if math.isfinite(b):
            return b - 1.0
        return 0.0


@dataclass(frozen=True)
class StateMap:
    """Affine map ``x = shift + sign * y`` from canonical to original states."""

    shift: float = 0.0
    sign: float = 1.0

    def to_original(self, y):
        return self.shift + self.sign * y

    def to_canonical(self, x):
        return self.sign * (x - self.shift)

    def interval(self, a, b):
        """Image of the canonical interval ``(a, b)``, endpoints sorted."""
        u, v = self.to_original(a), self.to_original(b)
        return (u, v) if u <= v else (v, u)

    def then(self, inner: "StateMap") -> "StateMap":
        """Compose: apply ``inner`` first (canonical to intermediate), then self."""
        return StateMap(self.shift + self.sign * inner.shift, self.sign * inner.sign)


IDENTITY = StateMap()


@dataclass(frozen=True)
class DiffusionSpec:
    """State interval, scale model and optional SDE coefficients.

    The scale is normalized on construction so that ``S(alpha) = 0`` whenever
    the lower limit is finite. Endpoint limits not declared on the scale are
    extrapolated on first use and memoized.
    """

    interval: StateInterval
    scale: ScaleModel
    drift: Optional[Callable] = None
    vol: Optional[Callable] = None
    speed: Optional[Callable] = None
    name: str = "custom"
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if (self.drift is None) != (self.vol is None):
            raise DomainError("drift and vol must be given together")
        lower, how = self._endpoint_value("lower", raw=True)
        if math.isfinite(lower) and lower != 0.0:
            object.__setattr__(self, "scale", self.scale.shifted(lower))
        self.cache["lower"] = (0.0 if math.isfinite(lower) else lower, how)

    # -- scale access ------------------------------------------------------
    @property
    def alpha(self) -> float:
        return self.interval.alpha

    @property
    def beta(self) -> float:
        return self.interval.beta

    def _endpoint_value(self, side: str, raw: bool = False):
        declared = getattr(self.scale.limits, side)
        if declared is not None:
            off = 0.0 if raw else self.scale.offset
            return float(declared) - off, "declared"
        end = self.alpha if side == "lower" else self.beta
        inner = self.interval.interior_point()
        val = scale_endpoint_limit(self.scale, end, inner)
        if raw and math.isfinite(val):
            val += self.scale.offset
        return val, "extrapolated"

    def endpoint(self, side: str):
        """``(S(endpoint), how)`` for ``side`` in {"lower", "upper"}."""
        if side not in self.cache:
            self.cache[side] = self._endpoint_value(side)
        return self.cache[side]

    @property
    def s_alpha(self) -> float:
        return self.endpoint("lower")[0]

    @property
    def s_beta(self) -> float:
        return self.endpoint("upper")[0]

    def squared_limit(self, side: str):
        """``(lim y**2 / |S(y)|, how)`` at an infinite endpoint with infinite scale."""
        key = side + "_sq"
        if key not in self.cache:
            declared = getattr(self.scale.limits, key)
            if declared is not None:
                self.cache[key] = (float(declared), "declared")
            else:
                end = self.beta if side == "upper" else self.alpha
                anchor = self.alpha if side == "upper" else self.beta
                anchor = anchor if math.isfinite(anchor) else 0.0
                inner = self.interval.interior_point()
                val = squared_ratio_limit(self.scale, end, inner, anchor)
                self.cache[key] = (val, "extrapolated")
        return self.cache[key]

    def S(self, x):
        """Normalized scale with endpoint limits substituted at ``alpha``/``beta``."""
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            xv = float(arr)
            if xv == self.alpha:
                return self.s_alpha
            if xv == self.beta:
                return self.s_beta
            return self.scale(xv)
        out = np.asarray(self.scale(arr), dtype=float)
        lo, hi = arr == self.alpha, arr == self.beta
        if lo.any():
            out = np.where(lo, self.s_alpha, out)
        if hi.any():
            out = np.where(hi, self.s_beta, out)
        return out

    def dS(self, x):
        return self.scale.derivative(x)

    def S_inv(self, s: float, lo: float | None = None, hi: float | None = None) -> float:
        """State ``y`` with ``S(y) = s``, by bisection inside the interval."""
        a, b = self.alpha, self.beta
        if lo is None:
            lo = a if math.isfinite(a) else self.interval.interior_point() - 1.0
            while not math.isfinite(a) and self.S(lo) > s:
                lo = 2 * lo - 1.0 if lo < 0 else -1.0
                if lo < -1e300:
                    raise DomainError("scale inverse below representable range")
        if hi is None:
            hi = b if math.isfinite(b) else self.interval.interior_point() + 1.0
            if not math.isfinite(b):
                while self.S(hi) < s:
                    hi = 2 * hi + 1.0 if hi > 0 else 1.0
                    if hi > 1e300:
                        raise DomainError("scale inverse above representable range")
        return invert(self.S, s, lo, hi)

    def check_state(self, x) -> float:
        x = float(x)
        if not self.interval.contains(x):
            raise DomainError(f"state {x} outside ({self.alpha}, {self.beta})")
        return x


@dataclass(frozen=True)
class Classification:
    tag: str
    limit_lower: float
    limit_upper: float
    attractive_lower: bool
    attractive_upper: bool
    s_lower: float = 0.0
    s_upper: float = math.inf
    extrapolated: tuple = ()

    def describe(self) -> str:
        parts = [
            self.tag,
            f"S(alpha)={self.s_lower:.6g}",
            f"S(beta)={self.s_upper:.6g}",
            f"lim_lower={self.limit_lower:.6g}",
            f"lim_upper={self.limit_upper:.6g}",
        ]
        if self.extrapolated:
            parts.append("extrapolated=" + ",".join(self.extrapolated))
        return " ".join(parts)


TAGS = (
    "InfiniteValue",
    "RecurrentBounded",
    "CaseI",
    "CaseII",
    "CaseIII",
    "SpecialTransientI",
    "SpecialTransientII",
    "UnsupportedMarginal",
)


def _exit_limit(spec: DiffusionSpec, x: float, side: str) -> float:
    """``lim y**2 P_x(tau_y < inf)`` as ``y`` tends to one endpoint."""
    sa, sb, sx = spec.s_alpha, spec.s_beta, spec.S(x)
    if side == "upper":
        end, own, other = spec.beta, sb, sa
    else:
        end, own, other = spec.alpha, sa, sb
    if math.isinf(own):
        if math.isinf(other):
            # recurrent: every level is reached almost surely
            return end * end if math.isfinite(end) else math.inf
        if math.isfinite(end):
            return 0.0
        sq, _ = spec.squared_limit(side)
        return sq * abs(sx - other)
    # attractive endpoint: positive probability of converging there
    p = (sx - other) / (own - other) if math.isfinite(other) else 1.0
    return end * end * p if math.isfinite(end) else math.inf


def classify(spec: DiffusionSpec, x: float) -> Classification:
    """Regime of the variance problem for ``spec`` started at ``x``."""
    x = spec.check_state(x)
    screen_monotone(spec.scale, spec.alpha, spec.beta, center=x)
    sa, how_a = spec.endpoint("lower")
    sb, how_b = spec.endpoint("upper")
    extrap = [name for name, how in (("S(alpha)", how_a), ("S(beta)", how_b)) if how == "extrapolated"]
    att_lo, att_hi = math.isfinite(sa), math.isfinite(sb)
    fin_lo, fin_hi = math.isfinite(spec.alpha), math.isfinite(spec.beta)

    lim_lo = _exit_limit(spec, x, "lower")
    lim_hi = _exit_limit(spec, x, "upper")
    for side in ("lower", "upper"):
        entry = spec.cache.get(side + "_sq")
        if entry is not None and entry[1] == "extrapolated":
            extrap.append(f"lim_{side}")

    if not att_lo and not att_hi:
        tag = "RecurrentBounded" if fin_lo and fin_hi else "InfiniteValue"
    elif (att_lo and not fin_lo) or (att_hi and not fin_hi):
        tag = "InfiniteValue"
    elif att_lo and att_hi:
        tag = "CaseIII"
    elif att_lo:
        tag = _transient_tag(lim_hi, "I")
    else:
        tag = _transient_tag(lim_lo, "II")
    return Classification(
        tag=tag,
        limit_lower=lim_lo,
        limit_upper=lim_hi,
        attractive_lower=att_lo,
        attractive_upper=att_hi,
        s_lower=sa,
        s_upper=sb,
        extrapolated=tuple(extrap),
    )


def _transient_tag(limit: float, roman: str) -> str:
    if limit == 0.0:
        return "Case" + roman
    if math.isinf(limit):
        return "InfiniteValue"
    return "SpecialTransient" + roman


# ---------------------------------------------------------------------------
# exit laws


def _check_exit_args(spec, x, a, b):
    if not (spec.alpha <= a <= x <= b <= spec.beta):
        raise DomainError(f"need alpha <= a <= x <= b <= beta, got a={a}, x={x}, b={b}")
    if a == x or b == x:
        return None
    return spec.S(a), spec.S(x), spec.S(b)


def hit_prob(spec: DiffusionSpec, x: float, a: float, b: float):
    """``(P(exit at a), P(exit at b))`` for the exit from ``(a, b)`` started at ``x``.

    An endpoint whose scale limit is infinite is never reached; its mass goes
    to the other side.
    """
    vals = _check_exit_args(spec, x, a, b)
    if vals is None:
        return (1.0, 0.0) if a == x else (0.0, 1.0)
    sa, sx, sb = vals
    if math.isinf(sa) and math.isinf(sb):
        raise DomainError("no exit from a recurrent interval")
    if math.isinf(sa):
        return 0.0, 1.0
    if math.isinf(sb):
        return 1.0, 0.0
    p_up = (sx - sa) / (sb - sa)
    p_up = min(1.0, max(0.0, p_up))
    return 1.0 - p_up, p_up


def _two_point(spec, x, a, b):
    p_lo, p_hi = hit_prob(spec, x, a, b)
    for end, p in ((a, p_lo), (b, p_hi)):
        if p > 0 and math.isinf(end):
            raise Unbounded(f"positive mass {p:.3g} at infinite endpoint")
    return p_lo, p_hi


def exit_mean(spec: DiffusionSpec, x: float, a: float, b: float) -> float:
    p_lo, p_hi = _two_point(spec, x, a, b)
    return (a * p_lo if p_lo else 0.0) + (b * p_hi if p_hi else 0.0)


def exit_variance(spec: DiffusionSpec, x: float, a: float, b: float) -> float:
    p_lo, p_hi = _two_point(spec, x, a, b)
    if p_lo == 0.0 or p_hi == 0.0:
        return 0.0
    return (b - a) ** 2 * p_lo * p_hi


# ---------------------------------------------------------------------------
# transforms


def _known_limits(spec: DiffusionSpec) -> dict:
    out = {"lower": spec.s_alpha, "upper": spec.s_beta}
    for side in ("lower", "upper"):
        end = spec.alpha if side == "lower" else spec.beta
        s_end = out[side]
        if math.isinf(end) and math.isinf(s_end):
            other = out["upper" if side == "lower" else "lower"]
            if math.isfinite(other):
                out[side + "_sq"] = spec.squared_limit(side)[0]
    return out


def translate_to_zero(spec: DiffusionSpec):
    """Shift the state space to ``(0, beta - alpha)``; returns ``(spec, StateMap)``."""
    alpha = spec.alpha
    if not math.isfinite(alpha):
        raise DomainError("translation needs a finite lower endpoint")
    if alpha == 0.0:
        return spec, IDENTITY
    lim = _known_limits(spec)
    sc = spec.scale
    f, d = sc.__call__, sc.deriv

    def S_hat(y):
        return f(np.asarray(y, dtype=float) + alpha)

    def wrap(g):
        return None if g is None else (lambda y: g(np.asarray(y, dtype=float) + alpha))

    deriv = None if d is None else (lambda y: sc.derivative(np.asarray(y, dtype=float) + alpha))
    model = ScaleModel(
        func=S_hat,
        deriv=deriv,
        kind=sc.kind,
        breakpoints=tuple(bp - alpha for bp in sc.breakpoints),
        limits=ScaleLimits(
            lower=lim["lower"], upper=lim["upper"],
            upper_sq=lim.get("upper_sq"), lower_sq=lim.get("lower_sq"),
        ),
    )
    iv = spec.interval
    new = DiffusionSpec(
        interval=StateInterval(0.0, iv.beta - alpha, iv.lower_behavior, iv.upper_behavior),
        scale=model,
        drift=wrap(spec.drift),
        vol=wrap(spec.vol),
        speed=wrap(spec.speed),
        name=spec.name + "+shift",
    )
    return new, StateMap(shift=alpha, sign=1.0)


def reflect(spec: DiffusionSpec):
    """Mirror ``z = beta - x`` onto ``(0, beta - alpha)``; returns ``(spec, StateMap)``."""
    beta = spec.beta
    if not math.isfinite(beta):
        raise DomainError("reflection needs a finite upper endpoint")
    lim = _known_limits(spec)
    sc = spec.scale
    s_beta = lim["upper"]
    if math.isfinite(s_beta):
        anchor = s_beta
    else:
        anchor = float(sc(spec.interval.interior_point()))
    f = sc.__call__

    def S_check(z):
        return anchor - f(beta - np.asarray(z, dtype=float))

    deriv = None
    if sc.deriv is not None:
        deriv = lambda z: sc.derivative(beta - np.asarray(z, dtype=float))  # noqa: E731

    def mirror(g, flip=False):
        if g is None:
            return None
        if flip:
            return lambda z: -g(beta - np.asarray(z, dtype=float))
        return lambda z: g(beta - np.asarray(z, dtype=float))

    lower_new = anchor - s_beta if math.isfinite(s_beta) else -math.inf
    upper_new = anchor - lim["lower"] if math.isfinite(lim["lower"]) else math.inf
    model = ScaleModel(
        func=S_check,
        deriv=deriv,
        kind=sc.kind,
        breakpoints=tuple(sorted(beta - bp for bp in sc.breakpoints)),
        limits=ScaleLimits(
            lower=lower_new, upper=upper_new,
            upper_sq=lim.get("lower_sq"), lower_sq=lim.get("upper_sq"),
        ),
    )
    iv = spec.interval
    new = DiffusionSpec(
        interval=StateInterval(0.0, beta - iv.alpha, iv.upper_behavior, iv.lower_behavior),
        scale=model,
        drift=mirror(spec.drift, flip=True),
        vol=mirror(spec.vol),
        speed=mirror(spec.speed),
        name=spec.name + "+reflect",
    )
    return new, StateMap(shift=beta, sign=-1.0)


def scaled(spec: DiffusionSpec, lam: float) -> DiffusionSpec:
    """The same diffusion with scale ``lam * S``; every exit law is unchanged."""
    lim = _known_limits(spec)
    model = spec.scale.scaled(lam)
    model = ScaleModel(
        func=model.func,
        deriv=model.deriv,
        kind=model.kind,
        breakpoints=model.breakpoints,
        limits=ScaleLimits(
            lower=lam * lim["lower"], upper=lam * lim["upper"],
            upper_sq=None if "upper_sq" not in lim else lim["upper_sq"] / lam,
            lower_sq=None if "lower_sq" not in lim else lim["lower_sq"] / lam,
        ),
    )
    return DiffusionSpec(spec.interval, model, spec.drift, spec.vol, spec.speed, spec.name)
