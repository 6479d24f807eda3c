"""Run configuration: a YAML document naming a diffusion, start points and sampling options.

Example::

    diffusion:
      kind: gbm
      mu: -1
      sigma: 1
    x: 1.0
    mc: {seed: 7, n: 1000000}

A custom scale replaces ``kind`` with ``custom``::

    diffusion:
      custom:
        alpha: 0
        beta: inf
        breakpoints: [2, 2.1, 12]
        pieces:
          - (x^2 - 1.5*x) / (4*x - 6)
          - ...
        limits: {lower: 0, upper: inf, upper_sq: 0}

Piece expressions use ``+ - * / ^``, parentheses, numbers, ``x``, ``exp`` and ``log``.
"""

from __future__ import annotations

import ast
import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import yaml

from . import builtins, embedded, solver
from .diffusion import DiffusionSpec
from .errors import ConfigError, VarStopError
from .scale import ScaleLimits

_FUNCS = {"exp": np.exp, "log": np.log}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)

# tolerance name -> (module, attribute) pairs it overrides
TOLERANCES = {
    "mean_rtol": [(solver, "MEAN_RTOL")],
    "foc_tol": [(solver, "FOC_TOL")],
    "monotone_tol": [(solver, "MONOTONE_TOL")],
    "plateau_rtol": [(embedded, "PLATEAU_RTOL"), (solver, "PLATEAU_RTOL")],
    "contact_rtol": [(embedded, "CONTACT_RTOL")],
}


def _check(node: ast.AST, src: str) -> None:
    if isinstance(node, ast.Expression):
        return _check(node.body, src)
    if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check(node.left, src)
        return _check(node.right, src)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNARY):
        return _check(node.operand, src)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return None
    if isinstance(node, ast.Name) and node.id == "x":
        return None
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
            and len(node.args) == 1 and not node.keywords):
        return _check(node.args[0], src)
    raise ConfigError(f"unsupported syntax in expression {src!r}: {ast.dump(node)[:60]}")


def parse_expression(src: str) -> Callable:
    """Compile a piece expression in ``x`` into a vectorized callable."""
    if not isinstance(src, (str, int, float)) or isinstance(src, bool):
        raise ConfigError(f"expression must be a string, got {src!r}")
    text = str(src).replace("^", "**")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {src!r}: {exc.msg}") from None
    _check(tree, str(src))
    code = compile(tree, "<scale piece>", "eval")

    def f(x):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return eval(code, {"__builtins__": {}, **_FUNCS}, {"x": x})

    f.source = str(src)
    return f


def _num(v, what: str) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {v!r}") from None


def _params(block: dict, names, kind: str) -> list:
    missing = [n for n in names if n not in block]
    if missing:
        raise ConfigError(f"{kind} needs {', '.join(missing)}")
    extra = set(block) - set(names) - {"kind"}
    if extra:
        raise ConfigError(f"unknown {kind} parameters: {', '.join(sorted(extra))}")
    return [_num(block[n], f"{kind}.{n}") for n in names]


def _limits(block) -> ScaleLimits:
    if block is None:
        return ScaleLimits()
    if not isinstance(block, dict):
        raise ConfigError("limits must be a mapping")
    extra = set(block) - {"lower", "upper", "lower_sq", "upper_sq"}
    if extra:
        raise ConfigError(f"unknown limit keys: {', '.join(sorted(extra))}")
    return ScaleLimits(**{k: _num(v, f"limits.{k}") for k, v in block.items()})


def _custom(block: dict) -> DiffusionSpec:
    if not isinstance(block, dict):
        raise ConfigError("custom must be a mapping")
    for key in ("alpha", "beta", "breakpoints", "pieces"):
        if key not in block:
            raise ConfigError(f"custom scale needs {key}")
    alpha, beta = _num(block["alpha"], "alpha"), _num(block["beta"], "beta")
    bps = [_num(b, "breakpoint") for b in block["breakpoints"] or []]
    pieces = block["pieces"]
    if not isinstance(pieces, list) or len(pieces) != len(bps) + 1:
        raise ConfigError(f"need {len(bps) + 1} pieces for {len(bps)} breakpoints")
    if any(not alpha < b < beta for b in bps) or any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
        raise ConfigError("breakpoints must increase strictly inside (alpha, beta)")
    fns = [parse_expression(p) for p in pieces]
    name = str(block.get("name", "custom"))
    try:
        return builtins.piecewise_scale(bps, fns, alpha, beta, _limits(block.get("limits")), name)
    except VarStopError as exc:
        raise ConfigError(f"invalid custom scale: {exc}") from None


def build_spec(block: dict) -> DiffusionSpec:
    """Diffusion from a ``diffusion`` block: exactly one of ``kind`` or ``custom``."""
    if not isinstance(block, dict):
        raise ConfigError("diffusion must be a mapping")
    if ("kind" in block) == ("custom" in block):
        raise ConfigError("diffusion needs exactly one of 'kind' or 'custom'")
    if "custom" in block:
        if len(block) != 1:
            raise ConfigError("custom diffusion takes no other keys")
        return _custom(block["custom"])
    kind = str(block["kind"])
    try:
        if kind == "gbm":
            return builtins.gbm(*_params(block, ("mu", "sigma"), kind))
        if kind == "jacobi":
            return builtins.jacobi(*_params(block, ("a", "b", "sigma"), kind))
        if kind == "natural":
            return builtins.natural_scale(*_params(block, ("alpha", "beta"), kind))
        if kind == "logit":
            return builtins.logit_scale(*_params(block, ("alpha", "beta"), kind))
        if kind == "randomized_example":
            extra = set(block) - {"kind", "verbatim"}
            if extra:
                raise ConfigError(f"unknown {kind} parameters: {', '.join(sorted(extra))}")
            return builtins.randomized_example(bool(block.get("verbatim", False)))
    except VarStopError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid {kind} parameters: {exc}") from None
    raise ConfigError(f"unknown diffusion kind {kind!r}")


@dataclass
class MCConfig:
    seed: int = 0
    n: int = 1_000_000
    eps: float = 0.01
    workers: int = 1


@dataclass
class RunConfig:
    spec: DiffusionSpec
    x: Optional[float] = None
    grid: Optional[dict] = None
    tolerances: dict = field(default_factory=dict)
    mc: MCConfig = field(default_factory=MCConfig)
    out: Optional[str] = None

    def points(self, n: int | None = None) -> np.ndarray:
        """Start points: an explicit list, or ``n`` (or configured) points on ``[lo, hi]``."""
        g = self.grid
        if g is None:
            if self.x is None:
                raise ConfigError("no start point or grid given")
            pts = np.array([self.x])
        elif "points" in g:
            pts = np.asarray(g["points"], dtype=float)
        else:
            lo, hi = g.get("lo"), g.get("hi")
            if lo is None or hi is None:
                a, b = self.spec.alpha, self.spec.beta
                if not (math.isfinite(a) and math.isfinite(b)):
                    raise ConfigError("grid needs lo and hi on an unbounded interval")
                m = int(n or g.get("n", 101))
                return np.linspace(a, b, m + 2)[1:-1]
            m = int(n or g.get("n", 101))
            pts = np.array([lo]) if m == 1 else np.linspace(lo, hi, m)
        if pts.ndim != 1 or pts.size == 0:
            raise ConfigError("grid must be a non-empty list")
        if np.any(np.diff(pts) <= 0):
            raise ConfigError("grid must be strictly increasing")
        if not np.all((pts > self.spec.alpha) & (pts < self.spec.beta)):
            raise ConfigError("grid points must lie inside (alpha, beta)")
        return pts


def _grid(block) -> Optional[dict]:
    if block is None:
        return None
    if isinstance(block, list):
        return {"points": [_num(v, "grid point") for v in block]}
    if not isinstance(block, dict):
        raise ConfigError("grid must be a list or a mapping with lo, hi, n")
    extra = set(block) - {"lo", "hi", "n"}
    if extra:
        raise ConfigError(f"unknown grid keys: {', '.join(sorted(extra))}")
    out = {k: _num(v, f"grid.{k}") for k, v in block.items()}
    if "n" in out:
        if out["n"] < 1 or out["n"] != int(out["n"]):
            raise ConfigError("grid.n must be a positive integer")
        out["n"] = int(out["n"])
    if ("lo" in out) != ("hi" in out):
        raise ConfigError("grid needs both lo and hi")
    return out


def _mc(block) -> MCConfig:
    if block is None:
        return MCConfig()
    if not isinstance(block, dict):
        raise ConfigError("mc must be a mapping")
    extra = set(block) - {"seed", "n", "eps", "workers"}
    if extra:
        raise ConfigError(f"unknown mc keys: {', '.join(sorted(extra))}")
    cfg = MCConfig()
    try:
        for k, v in block.items():
            setattr(cfg, k, type(getattr(cfg, k))(v))
    except (TypeError, ValueError):
        raise ConfigError(f"bad mc value in {block!r}") from None
    if cfg.n < 1 or cfg.workers < 1 or not cfg.eps > 0:
        raise ConfigError("mc.n and mc.workers must be positive, mc.eps > 0")
    return cfg


def from_dict(doc) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    extra = set(doc) - {"diffusion", "x", "grid", "tolerances", "mc", "out"}
    if extra:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(extra))}")
    if "diffusion" not in doc:
        raise ConfigError("config needs a diffusion block")
    spec = build_spec(doc["diffusion"])
    tol = doc.get("tolerances") or {}
    if not isinstance(tol, dict) or set(tol) - set(TOLERANCES):
        raise ConfigError(f"tolerances must be a mapping over {', '.join(TOLERANCES)}")
    cfg = RunConfig(
        spec=spec,
        x=None if doc.get("x") is None else _num(doc["x"], "x"),
        grid=_grid(doc.get("grid")),
        tolerances={k: _num(v, k) for k, v in tol.items()},
        mc=_mc(doc.get("mc")),
        out=None if doc.get("out") is None else str(doc["out"]),
    )
    if cfg.x is not None and not spec.alpha < cfg.x < spec.beta:
        raise ConfigError(f"x={cfg.x} outside ({spec.alpha}, {spec.beta})")
    return cfg


def load(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    return from_dict(doc)


@contextlib.contextmanager
def tolerances(overrides: dict):
    """Temporarily override module tolerances by name."""
    saved = []
    try:
        for name, value in overrides.items():
            for mod, attr in TOLERANCES[name]:
                saved.append((mod, attr, getattr(mod, attr)))
                setattr(mod, attr, value)
        yield
    finally:
        for mod, attr, value in reversed(saved):
            setattr(mod, attr, value)
