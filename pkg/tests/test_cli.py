import csv
import io
import json
from pathlib import Path

import pytest

from varstop import cli
from varstop.errors import UnsupportedMarginal
from varstop.montecarlo import EstimatorResult

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_classify(capsys):
    code, out, _ = run(capsys, "classify", "--config", str(CONFIGS / "gbm_infinite.yaml"))
    assert code == 0 and out.startswith("InfiniteValue")
    code, out, _ = run(capsys, "classify", "--config", str(CONFIGS / "jacobi.yaml"))
    assert code == 0 and out.startswith("CaseIII")


def test_classify_undetermined(capsys, tmp_path):
    cfg = write(tmp_path, "diffusion:\n  custom:\n    alpha: 1\n    beta: inf\n"
                          "    breakpoints: []\n    pieces: ['-1/log(x)']\nx: 2.0\n")
    code, _, err = run(capsys, "classify", "--config", cfg)
    assert code == 2 and "undetermined" in err


def test_malformed_config(capsys, tmp_path):
    cfg = write(tmp_path, "diffusion:\n  custom:\n    alpha: 0\n    beta: 1\n"
                          "    breakpoints: []\n    pieces: ['x +* 2']\n")
    code, _, err = run(capsys, "solve", "--config", cfg, "--x", "0.5")
    assert code == 1 and "config error" in err
    code, _, _ = run(capsys, "solve", "--config", str(tmp_path / "absent.yaml"))
    assert code == 1


def test_solve_example_row(capsys):
    code, out, err = run(capsys, "solve", "--config", str(CONFIGS / "randomized_example.yaml"))
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == ",".join(cli.COLUMNS)
    (row,) = rows(out)
    assert row["rule_kind"] == "mix" and row["p_star"] == "0.7375" and row["V"] == "1.0625"
    assert row["z_lo"] == "2" and row["z_hi"] == "12" and row["mean_check"] == "ok"
    assert float(row["duality_gap"]) <= 1e-8
    record = json.loads(err.strip().splitlines()[-1])
    assert record["p_star"] == "0.7375"


def test_solve_gbm_and_recurrent(capsys):
    _, out, _ = run(capsys, "solve", "--config", str(CONFIGS / "gbm.yaml"))
    (row,) = rows(out)
    assert row["rule_kind"] == "exit" and row["b"] == "1.58740105197" and row["V"] == "0.472470393711"
    _, out, _ = run(capsys, "solve", "--config", str(CONFIGS / "logit.yaml"))
    (row,) = rows(out)
    assert row["rule_kind"] == "whole_interval" and row["V"] == "0.25" and row["mean_check"] == "exempt"


def test_unsupported_marginal_exit_code(capsys, monkeypatch):
    def refuse(spec, x):
        raise UnsupportedMarginal("tie condition fails")

    monkeypatch.setattr(cli, "solve", refuse)
    code, _, err = run(capsys, "solve", "--config", str(CONFIGS / "gbm.yaml"))
    assert code == 3 and "unsupported regime" in err


def test_sweep_example_region(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--config", str(CONFIGS / "randomized_example.yaml"),
                     "--grid", "30", "--no-gap", "--out", str(out))
    assert code == 0
    table = rows(out.read_text())
    assert len(table) == 30
    for r in table:
        x = float(r["x"])
        inside = 0.75 < x < 2.958
        assert (r["p_star"] != "") == inside, x
        assert r["error"] == ""


def test_sweep_is_byte_stable(capsys, tmp_path):
    outs = []
    for k in range(2):
        p = tmp_path / f"s{k}.csv"
        run(capsys, "sweep", "--config", str(CONFIGS / "gbm.yaml"), "--out", str(p))
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_sweep_single_point(capsys, tmp_path):
    cfg = write(tmp_path, "diffusion: {kind: gbm, mu: -1, sigma: 1}\ngrid: {lo: 1.0, hi: 2.0}\n")
    code, out, _ = run(capsys, "sweep", "--config", cfg, "--grid", "1")
    assert code == 0 and len(rows(out)) == 1


def test_sweep_jacobi_switch(capsys):
    cfg_path = str(CONFIGS / "jacobi.yaml")
    code, out, _ = run(capsys, "sweep", "--config", cfg_path, "--grid", "25")
    table = rows(out)
    upper = [float(r["x"]) for r in table if r["b"] == "1"]
    lower = [float(r["x"]) for r in table if r["a"] == "0"]
    assert code == 0 and max(lower) < 0.44 and min(upper) > 0.42


def test_verify(capsys):
    code, out, _ = run(capsys, "verify", "--config", str(CONFIGS / "randomized_example.yaml"), "--samples", "200000")
    assert code == 0 and "z=" in out


def test_verify_immediate(capsys, tmp_path):
    cfg = write(tmp_path, "diffusion: {kind: gbm, mu: -1, sigma: 1}\nx: 1.0\n")
    code, out, _ = run(capsys, "verify", "--config", cfg, "--x", "5.0", "--samples", "1000")
    assert code == 0


def test_verify_failure_exit_code(capsys, monkeypatch):
    monkeypatch.setattr(cli, "sample_rule", lambda *a: EstimatorResult(0.0, 2.0, 0.01, 10, 0.0))
    code, _, _ = run(capsys, "verify", "--config", str(CONFIGS / "gbm.yaml"))
    assert code == 4


def test_game(capsys):
    code, out, _ = run(capsys, "game", "--config", str(CONFIGS / "randomized_example.yaml"), "--sandwich")
    assert code == 0 and "essential=2,12" in out and "sandwich=" in out
