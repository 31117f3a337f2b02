import csv
import json
import os
import subprocess
import sys

import pytest

from conftest import fixture_path
from metricbm import cli
from metricbm import resolvent as rs


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_validate_ok(tmp_path, capsys):
    assert run(tmp_path, "validate", "--spec", fixture_path("holding_vertex.yaml")) == 0
    out = capsys.readouterr().out
    assert "HoldingKilling" in out
    log = [json.loads(l) for l in open(tmp_path / "runs.jsonl")]
    assert log[-1]["status"] == 0 and log[-1]["command"] == "validate"


@pytest.mark.parametrize("name, word", [("dirichlet.yaml", "DirichletExcluded"),
                                        ("missing_length.yaml", "length")])
def test_validation_exit_code(tmp_path, capsys, name, word):
    assert run(tmp_path, "validate", "--spec", fixture_path(name)) == 2
    assert word in capsys.readouterr().err


def test_solve_trap_value(tmp_path):
    spec = fixture_path("trap_vertex.yaml")
    assert run(tmp_path, "solve", "--spec", spec, "--function", "bump", "--lambda", "2.0") == 0
    rows = read_csv(tmp_path / "solve_bump_lam2p0.csv")
    at_u = [r for r in rows if r["edge"] == "i" and float(r["x"]) == 0.0]
    assert at_u and abs(float(at_u[0]["u"]) - 0.5) < 1e-9
    diag = json.load(open(tmp_path / "solve_bump.json"))
    assert diag["lambdas"]["2.0"]["contraction_ok"]


def test_solve_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["solve", "--spec", fixture_path("star3_kirchhoff.yaml"), "--function", "bump",
            "--lambda", "1,10"]
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    for name in ("solve_bump_lam1p0.csv", "solve_bump_lam10p0.csv", "solve_bump.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ident = json.load(open(a / "solve_bump.json"))["resolvent_identity"]
    assert all(v < 1e-8 for v in ident.values())


def test_solve_zero_function(tmp_path):
    assert run(tmp_path, "solve", "--spec", fixture_path("star3_kirchhoff.yaml"), "--function", "zero",
               "--lambda", "1") == 0
    assert all(float(r["u"]) == 0.0 for r in read_csv(tmp_path / "solve_zero_lam1p0.csv"))


def test_unknown_function(tmp_path, capsys):
    assert run(tmp_path, "solve", "--spec", fixture_path("star3_kirchhoff.yaml"), "--function", "nope",
               "--lambda", "1") == 2


def test_nonpositive_lambda(tmp_path):
    assert run(tmp_path, "solve", "--spec", fixture_path("star3_kirchhoff.yaml"), "--function", "bump",
               "--lambda", "-1") == 2


def test_singular_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(rs, "SINGULAR_TOL", 10.0)
    assert run(tmp_path, "solve", "--spec", fixture_path("star3_kirchhoff.yaml"), "--function", "bump",
               "--lambda", "1") == 3
    err = capsys.readouterr().err
    assert "SingularSecularMatrix" in err and "scan-det" in err


def test_scan_det(tmp_path):
    assert run(tmp_path, "scan-det", "--spec", fixture_path("star3_elastic.yaml"),
               "--kappa-max", "3", "--steps", "61") == 0
    rows = read_csv(tmp_path / "scan_det.csv")
    assert len(rows) == 61
    assert {"kappa", "abs_det_z_plus", "abs_det_z_minus", "abs_det_z"} <= set(rows[0])
    summary = json.load(open(tmp_path / "scan_det.json"))
    # a - k b_sum vanishes at k = 0.2 / 0.8, a grid point; R_est is the next sample
    assert summary["R_est"] == pytest.approx(0.30)


def test_simulate_hitting(tmp_path):
    assert run(tmp_path, "simulate", "--spec", fixture_path("star3_kirchhoff.yaml"), "--estimator",
               "hitting", "--start", "e0:0.5", "--target", "o", "--paths", "20000", "--seed", "3",
               "--lambda", "2") == 0
    rep = json.load(open(tmp_path / "simulate_hitting.json"))
    assert abs(rep["z"]) < 4
    assert rep["oracle"] == pytest.approx(0.36787944117144233)


def test_simulate_requires_target(tmp_path):
    assert run(tmp_path, "simulate", "--spec", fixture_path("star3_kirchhoff.yaml"), "--estimator",
               "hitting", "--start", "e0:0.5", "--paths", "10") == 2


def test_simulate_shell_too_large(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--spec", fixture_path("two_vertex.yaml"), "--estimator",
               "resolvent", "--function", "bump", "--start", "i:0.5", "--eps", "0.9") == 2
    assert "ShellTooLarge" in capsys.readouterr().err


def test_simulate_trajectories(tmp_path):
    assert run(tmp_path, "simulate", "--spec", fixture_path("interval_reflecting.yaml"), "--estimator",
               "semigroup", "--function", "cos", "--start", "i:0.25", "--t", "0.1", "--paths", "2000",
               "--trajectories", "3") == 0
    rows = read_csv(tmp_path / "trajectories_semigroup.csv")
    assert {r["path"] for r in rows} == {"0", "1", "2"}
    rep = json.load(open(tmp_path / "simulate_semigroup.json"))
    assert rep["series"]["certificate"] < 1e-4


def test_compare_passes(tmp_path):
    assert run(tmp_path, "compare", "--spec", fixture_path("interval_reflecting.yaml"), "--function", "bump",
               "--start", "i:0.3", "--vertex", "u", "--paths", "20000", "--eps", "0.02") == 0
    rep = json.load(open(tmp_path / "compare_bump.json"))
    assert set(rep["checks"]) == {"resolvent", "decomposition", "semigroup"}


def test_compare_failure_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "Z_LIMIT", -1.0)
    monkeypatch.setattr(cli, "BIAS_BUDGET", 0.0)
    assert run(tmp_path, "compare", "--spec", fixture_path("star3_kirchhoff.yaml"), "--function", "bump",
               "--start", "e0:0.5", "--paths", "500", "--eps", "0.05") == 4


def test_env_output_dir_and_log_append(tmp_path, monkeypatch):
    monkeypatch.setenv("METRICBM_OUT", str(tmp_path / "env"))
    spec = fixture_path("star3_kirchhoff.yaml")
    assert cli.main(["validate", "--spec", spec]) == 0
    assert cli.main(["validate", "--spec", spec]) == 0
    lines = (tmp_path / "env" / "runs.jsonl").read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["argv"] == ["validate", "--spec", spec]
    assert {"wall_time_s", "backend", "config", "outputs", "version"} <= set(rec)


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "metricbm", "validate", "--spec",
                        fixture_path("star3_sticky.yaml"), "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert p.returncode == 0, p.stderr
