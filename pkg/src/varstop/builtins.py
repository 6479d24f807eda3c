"""Ready-made diffusions: GBM, Jacobi, natural and logit scales, piecewise scales."""

from __future__ import annotations

import math
import warnings
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .diffusion import DiffusionSpec, StateInterval
from .errors import DomainError
from .scale import PiecewiseFunction, ScaleLimits, ScaleModel


def _speed_from(vol: Callable, deriv: Callable) -> Callable:
    def m(x):
        x = np.asarray(x, dtype=float)
        return 2.0 / (vol(x) ** 2 * deriv(x))

    return m


def gbm(mu: float, sigma: float) -> DiffusionSpec:
    """Geometric Brownian motion ``dX = mu X dt + sigma X dW`` on ``(0, inf)``."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    gamma = 1.0 - 2.0 * mu / sigma**2
    if gamma == 0.0:
        func = np.log
        deriv = lambda x: 1.0 / x  # noqa: E731
        limits = ScaleLimits(lower=-math.inf, upper=math.inf, upper_sq=math.inf, lower_sq=None)
    else:
        func = lambda x: np.power(x, gamma) / gamma  # noqa: E731
        deriv = lambda x: np.power(x, gamma - 1.0)  # noqa: E731
        if gamma > 0:
            if gamma < 2:
                sq = math.inf
            elif gamma == 2:
                sq = 2.0
            else:
                sq = 0.0
            limits = ScaleLimits(lower=0.0, upper=math.inf, upper_sq=sq)
        else:
            limits = ScaleLimits(lower=-math.inf, upper=0.0)
    vol = lambda x: sigma * np.asarray(x, dtype=float)  # noqa: E731
    return DiffusionSpec(
        interval=StateInterval(0.0, math.inf),
        scale=ScaleModel(func=func, deriv=deriv, kind="closed-form", limits=limits),
        drift=lambda x: mu * np.asarray(x, dtype=float),
        vol=vol,
        speed=_speed_from(vol, deriv),
        name=f"gbm(mu={mu:g},sigma={sigma:g})",
    )


def jacobi_exponents(a: float, b: float, sigma: float):
    """``(B, A)`` with scale density ``x**-(B+1) * (1-x)**-(A+1)``."""
    s2 = sigma * sigma
    return 2 * a / s2 - 1.0, 2 * (b - a) / s2 - 1.0


def jacobi(a: float, b: float, sigma: float) -> DiffusionSpec:
    """Jacobi diffusion ``dX = (a - bX) dt + sigma sqrt(X(1-X)) dW`` on ``(0, 1)``.

    The scale is the integral of its density from 0, evaluated by adaptive
    quadrature with algebraic endpoint weights. Only parameters for which the
    density is integrable at both ends are accepted.
    """
    if not (0 < a < b) or sigma <= 0:
        raise DomainError("need 0 < a < b and sigma > 0")
    B, A = jacobi_exponents(a, b, sigma)
    p, q = -(B + 1.0), -(A + 1.0)
    if p <= -1.0 or q <= -1.0:
        raise DomainError("scale density not integrable at both endpoints")
    s_one = integrate.quad(lambda t: 1.0, 0.0, 1.0, weight="alg", wvar=(p, q),
                           epsabs=0, epsrel=1e-12, limit=200)[0]

    def one(x):
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return s_one
        if x <= 0.5:
            return integrate.quad(lambda t: (1.0 - t) ** q, 0.0, x, weight="alg", wvar=(p, 0.0),
                                  epsabs=0, epsrel=1e-12, limit=200)[0]
        tail = integrate.quad(lambda t: t**p, x, 1.0, weight="alg", wvar=(0.0, q),
                              epsabs=0, epsrel=1e-12, limit=200)[0]
        return s_one - tail

    def func(x):
        x = np.asarray(x, dtype=float)
        # tails near 1 are tiny; QUADPACK flags roundoff although the result is exact
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            if x.ndim == 0:
                return one(float(x))
            return np.array([one(v) for v in x.ravel()]).reshape(x.shape)

    def deriv(x):
        x = np.asarray(x, dtype=float)
        return np.power(x, p) * np.power(1.0 - x, q)

    vol = lambda x: sigma * np.sqrt(np.asarray(x) * (1.0 - np.asarray(x)))  # noqa: E731
    return DiffusionSpec(
        interval=StateInterval(0.0, 1.0),
        scale=ScaleModel(func=func, deriv=deriv, kind="closed-form",
                         limits=ScaleLimits(lower=0.0, upper=s_one)),
        drift=lambda x: a - b * np.asarray(x, dtype=float),
        vol=vol,
        speed=_speed_from(vol, deriv),
        name=f"jacobi(a={a:g},b={b:g},sigma={sigma:g})",
    )


def natural_scale(alpha: float, beta: float) -> DiffusionSpec:
    """Brownian motion on ``(alpha, beta)``: ``S(x) = x``."""
    return DiffusionSpec(
        interval=StateInterval(alpha, beta),
        scale=ScaleModel(
            func=lambda x: np.asarray(x, dtype=float),
            deriv=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            limits=ScaleLimits(lower=alpha, upper=beta),
        ),
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        vol=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        name=f"natural({alpha:g},{beta:g})",
    )


def logit_scale(alpha: float, beta: float) -> DiffusionSpec:
    """Recurrent diffusion on a bounded interval: ``S(x) = log((x-alpha)/(beta-x))``.

    Unit volatility with drift ``-S''/(2 S')``; neither endpoint is attractive.
    """
    if not (math.isfinite(alpha) and math.isfinite(beta)):
        raise DomainError("logit scale needs a bounded interval")

    def func(x):
        x = np.asarray(x, dtype=float)
        return np.log((x - alpha) / (beta - x))

    def deriv(x):
        x = np.asarray(x, dtype=float)
        return 1.0 / (x - alpha) + 1.0 / (beta - x)

    def drift(x):
        x = np.asarray(x, dtype=float)
        d2 = -1.0 / (x - alpha) ** 2 + 1.0 / (beta - x) ** 2
        return -0.5 * d2 / deriv(x)

    return DiffusionSpec(
        interval=StateInterval(alpha, beta),
        scale=ScaleModel(func=func, deriv=deriv,
                         limits=ScaleLimits(lower=-math.inf, upper=math.inf)),
        drift=drift,
        vol=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        name=f"logit({alpha:g},{beta:g})",
    )


def piecewise_scale(
    breakpoints: Sequence[float],
    pieces: Sequence[Callable],
    alpha: float,
    beta: float,
    limits: ScaleLimits | None = None,
    name: str = "piecewise",
) -> DiffusionSpec:
    """Scale given piece by piece on ``[b_{i-1}, b_i)``; no SDE coefficients."""
    fn = PiecewiseFunction(breakpoints, pieces)
    return DiffusionSpec(
        interval=StateInterval(alpha, beta),
        scale=ScaleModel(func=fn, kind="piecewise", breakpoints=fn.breakpoints,
                         limits=limits or ScaleLimits()),
        name=name,
    )


def randomized_example(verbatim: bool = False) -> DiffusionSpec:
    """Case-I scale on ``(0, inf)`` built to have a tie at ``c = 3/4`` between 2 and 12.

    Each piece is ``(x**2 - 1.5 x) / D(x)``. The literal denominator on
    ``[2, 2.1)`` is ``22 - 10x``, which leaves a downward jump of 0.0125 at 2.1;
    by default it is replaced with ``21.8 - 9.9x``, which agrees at 2 and
    makes the scale continuous at 2.1. ``verbatim=True`` keeps the literal form.
    """

    def num(x):
        return x * x - 1.5 * x

    middle = (lambda x: num(x) / (-10 * x + 22)) if verbatim else (lambda x: num(x) / (21.8 - 9.9 * x))
    pieces = [
        lambda x: num(x) / (4 * x - 6),
        middle,
        lambda x: num(x) / (0.1 * x + 0.8),
        lambda x: num(x) / (2 * np.exp(12.0 - x)),
    ]
    return piecewise_scale(
        (2.0, 2.1, 12.0), pieces, 0.0, math.inf,
        limits=ScaleLimits(lower=0.0, upper=math.inf, upper_sq=0.0),
        name="randomized-example",
    )


def tabulated_scale(xs: Sequence[float], ss: Sequence[float], alpha: float, beta: float,
                    limits: ScaleLimits | None = None) -> DiffusionSpec:
    """Scale from samples, interpolated by a shape-preserving cubic."""
    xs = np.asarray(xs, dtype=float)
    ss = np.asarray(ss, dtype=float)
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(ss) <= 0):
        raise DomainError("tabulated scale must be strictly increasing in both columns")
    interp = PchipInterpolator(xs, ss, extrapolate=False)
    return DiffusionSpec(
        interval=StateInterval(alpha, beta),
        scale=ScaleModel(func=interp, deriv=interp.derivative(), kind="tabulated",
                         limits=limits or ScaleLimits(lower=float(ss[0]) if xs[0] <= alpha else None,
                                                      upper=float(ss[-1]) if xs[-1] >= beta else None)),
        name="tabulated",
    )
