"""Command-line front end: ``varstop {classify,solve,sweep,verify,game} --config FILE``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

from . import config as config_mod
from .diffusion import classify
from .errors import ConfigError, LimitUndetermined, UnsupportedMarginal, VarStopError
from .game import duality_gap, solve_game
from .montecarlo import SampleConfig, sample_rule
from .rules import BernoulliMix, ExitInterval, Immediate, WholeInterval, rule_variance, thresholds
from .solver import SolveFailure, VarianceSolution, solve, value_profile

COLUMNS = ("x", "case", "V", "rule_kind", "a", "b", "z_lo", "z_hi",
           "p_star", "c_star", "duality_gap", "mean_check", "error")
Z_FAIL = 4.0

EXIT_OK, EXIT_CONFIG, EXIT_UNDETERMINED, EXIT_UNSUPPORTED, EXIT_VERIFY = 0, 1, 2, 3, 4


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return "%.12g" % v
    return str(v)


def _edges(rule, x):
    if isinstance(rule, Immediate):
        return x, x
    if isinstance(rule, (ExitInterval, BernoulliMix, WholeInterval)):
        t = thresholds(rule)
        return (t[0], t[-1]) if t else (None, None)
    return None, None


def _gap(spec, sol: VarianceSolution):
    if sol.classification.tag not in ("CaseI", "CaseII") or not math.isfinite(sol.value):
        return None
    gap = duality_gap(spec, sol.x, sol.value)
    sol.diagnostics.duality_gap = gap
    return None if math.isnan(gap) else gap


def record(spec, sol, with_gap: bool = True) -> dict:
    """One output row for a solution or a failed grid point."""
    if isinstance(sol, SolveFailure):
        row = dict.fromkeys(COLUMNS)
        row["x"] = sol.x
        row["error"] = f"{type(sol.error).__name__}: {sol.error}"
        return row
    a, b = _edges(sol.rule, sol.x)
    reg = sol.region
    in_region = reg is not None and reg.contains(sol.x)
    ok = sol.mean_ok
    return {
        "x": sol.x,
        "case": sol.classification.tag,
        "V": sol.value,
        "rule_kind": sol.rule.kind,
        "a": a,
        "b": b,
        "z_lo": reg.z_lo if in_region else None,
        "z_hi": reg.z_hi if in_region else None,
        "p_star": sol.p_star,
        "c_star": None if math.isnan(sol.c_star) else sol.c_star,
        "duality_gap": _gap(spec, sol) if with_gap else None,
        "mean_check": "exempt" if ok is None else ("ok" if ok else "fail"),
        "error": None,
    }


def write_rows(rows, out) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([fmt(r[c]) for c in COLUMNS])
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _start(cfg, args) -> float:
    if args.x is not None:
        x = args.x
    elif cfg.x is not None:
        x = cfg.x
    elif cfg.grid is not None:
        x = float(cfg.points()[0])
    else:
        raise ConfigError("no start point: pass --x or set x in the config")
    if not cfg.spec.alpha < x < cfg.spec.beta:
        raise ConfigError(f"x={x} outside ({cfg.spec.alpha}, {cfg.spec.beta})")
    return x


def cmd_classify(cfg, args) -> int:
    x = _start(cfg, args) if (args.x is not None or cfg.x is not None or cfg.grid) else None
    cls = classify(cfg.spec, x if x is not None else cfg.spec.interval.interior_point())
    print(cls.describe())
    return EXIT_OK


def cmd_solve(cfg, args) -> int:
    x = _start(cfg, args)
    sol = solve(cfg.spec, x)
    row = record(cfg.spec, sol)
    write_rows([row], args.out or cfg.out)
    # structured record for log collectors, one JSON object per line
    print(json.dumps({k: (fmt(v) if v is not None else None) for k, v in row.items()}), file=sys.stderr)
    return EXIT_OK


def cmd_sweep(cfg, args) -> int:
    pts = cfg.points(args.grid) if cfg.grid is not None or args.grid else cfg.points()
    sols = value_profile(cfg.spec, pts)
    write_rows([record(cfg.spec, s, with_gap=not args.no_gap) for s in sols], args.out or cfg.out)
    return EXIT_OK


def cmd_verify(cfg, args) -> int:
    x = _start(cfg, args)
    sol = solve(cfg.spec, x)
    eps = cfg.mc.eps
    rule = sol.rule.at(eps) if sol.rule.kind in ("epsilon", "whole_interval") else sol.rule
    # an epsilon-optimal rule is checked against its own exact variance
    target = sol.value if rule is sol.rule else rule_variance(cfg.spec, x, rule)
    sc = SampleConfig(seed=args.seed if args.seed is not None else cfg.mc.seed,
                      n=args.samples or cfg.mc.n, workers=cfg.mc.workers, eps=eps)
    est = sample_rule(cfg.spec, x, rule, sc)
    z = est.z_score(target)
    print(f"x={fmt(x)} V={fmt(sol.value)} target={fmt(target)} mc_var={fmt(est.variance)} "
          f"se={fmt(est.std_error_of_variance)} z={fmt(z)} n={est.n_effective} "
          f"absorbed={fmt(est.absorbed_fraction)}")
    return EXIT_VERIFY if abs(z) > Z_FAIL else EXIT_OK


def cmd_game(cfg, args) -> int:
    x = _start(cfg, args)
    g = solve_game(cfg.spec, x, sandwich=args.sandwich)
    print(f"x={fmt(x)} value={fmt(g.value)} c_star={fmt(g.c_star)} "
          f"essential={','.join(fmt(z) for z in g.essential)} rule={g.mix}")
    print(f"c_hat={fmt(g.bounds.c_hat)} M_x={fmt(g.bounds.m_x)} N_x={fmt(g.bounds.n_x)}")
    if args.sandwich:
        print(f"sandwich={fmt(g.sandwich[0])},{fmt(g.sandwich[1])}")
    for note in g.notes:
        print(f"note: {note}")
    return EXIT_OK


COMMANDS = {"classify": cmd_classify, "solve": cmd_solve, "sweep": cmd_sweep,
            "verify": cmd_verify, "game": cmd_game}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="varstop", description="Variance-optimal stopping of 1-D diffusions.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--x", type=float, help="start point (overrides the config)")
    p.add_argument("--grid", type=int, help="number of sweep points")
    p.add_argument("--seed", type=int, help="Monte-Carlo seed")
    p.add_argument("--samples", type=int, help="Monte-Carlo sample count")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--sandwich", action="store_true", help="game: also report grid minimax bounds")
    p.add_argument("--no-gap", action="store_true", help="sweep: skip the duality certificate")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.grid is not None and args.grid < 1:
        print("error: --grid must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = config_mod.load(args.config)
        with config_mod.tolerances(cfg.tolerances):
            return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LimitUndetermined as exc:
        print(f"classification undetermined: {exc}", file=sys.stderr)
        return EXIT_UNDETERMINED
    except UnsupportedMarginal as exc:
        print(f"unsupported regime (special transient case, tie condition fails): {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except VarStopError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
