import json
import math

import pytest

from nsvdecay.cli import main
from nsvdecay.series import NormSeries
from nsvdecay.spectral import read_snapshot


def run(*argv):
    return main([str(a) for a in argv])


def test_gen_datum_and_decay_character(tmp_path, capsys):
    assert run("-o", tmp_path, "gen-datum", "--family", "power-law", "--q", 0, "--kappa", 1, "--n", 3) == 0
    raw = json.loads((tmp_path / "datum.json").read_text())
    assert raw["r_star"] == 0 and raw["family"] == "power-law"
    capsys.readouterr()
    assert run("-o", tmp_path, "decay-character", tmp_path / "datum.json") == 0
    est = json.loads(capsys.readouterr().out)
    assert abs(est["r_star"]) <= 0.05
    manifest = json.loads((tmp_path / "manifest-decay-character.json").read_text())
    assert set(manifest) >= {"inputs", "parameter_hash", "versions", "outputs"}
    assert manifest["outputs"]["decay_character.json"]


def test_annulus_datum_reports_infinity(tmp_path, capsys):
    run("-o", tmp_path, "gen-datum", "--family", "annulus", "--delta", 0.1, "--kappa", 0.2, "--name", "ann.json")
    capsys.readouterr()
    assert run("-o", tmp_path, "decay-character", tmp_path / "ann.json") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["r_star"] == "inf" and out["sentinel"] == "INFINITY"


def test_evolve_linear_and_report(tmp_path):
    run("-o", tmp_path, "gen-datum", "--family", "power-law", "--q", 1, "--kappa", 1)
    assert run("-o", tmp_path, "evolve-linear", tmp_path / "datum.json", "--t0", 100, "--t1", 1000, "--per-decade", 16) == 0
    series = NormSeries.from_csv(tmp_path / "series.csv")
    assert len(series) == 17
    assert run("-o", tmp_path / "plots", "report", tmp_path / "series.csv") == 0
    rows = (tmp_path / "plots" / "series.dat").read_text().splitlines()
    assert rows[0].startswith("#") and len(rows) == 18
    slope = float(rows[9].split()[-1])
    assert slope == pytest.approx(2.5, abs=0.1)


def test_solve_writes_readable_artifacts(tmp_path):
    run("-o", tmp_path, "gen-datum", "--family", "power-law", "--q", 0, "--kappa", 1)
    cfg = {
        "grid": {"n_points": 12, "box_length": 8 * math.pi},
        "physics": {"alpha": 0.1, "nu": 0.05},
        "time": {"dt": 0.5, "t_end": 8.0, "samples_per_decade": 8},
        "datum": {"file": "datum.json", "h1alpha": 0.1},
        "snapshots": {"times": [0, 4, 8]},
    }
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    assert run("-o", tmp_path / "out", "solve", tmp_path / "run.json") == 0
    out = tmp_path / "out"
    series = NormSeries.from_csv(out / "series.csv")
    assert series.times[-1] == 8.0
    summary = json.loads((out / "trajectory.json").read_text())
    assert summary["max_divergence"] < 1e-10 and summary["lemma"]["passed"]
    snaps = sorted((out / "snapshots").iterdir())
    assert len(snaps) == 3
    field, params = read_snapshot(snaps[-1])
    assert field.grid.n_points == 12 and params.nu == 0.05
    assert run("-o", out, "report", out / "series.csv") == 0


def test_verify_small_plan_is_reproducible(tmp_path, capsys):
    plan = {"cases": [
        {"case_id": "lin-q0", "mode": "linear-continuum",
         "datum": {"family": "power-law", "q": 0.0, "kappa": 1.0}, "window": [100, 10000]},
        {"case_id": "crit", "mode": "linear-continuum", "datum": {"family": "critical-log", "kappa": 1.0}},
    ]}
    (tmp_path / "plan.json").write_text(json.dumps(plan))
    assert run("-o", tmp_path / "a", "verify", "--plan", tmp_path / "plan.json") == 0
    assert run("-o", tmp_path / "b", "verify", "--plan", tmp_path / "plan.json", "--jobs", 2) == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "report.json").read_bytes()
    assert "lin-q0: CONSISTENT" in capsys.readouterr().out
    assert run("-o", tmp_path / "a", "report", tmp_path / "a" / "report.json") == 0
    verdicts = (tmp_path / "a" / "verdicts.csv").read_text().splitlines()
    assert verdicts[0].startswith("case_id,mode") and len(verdicts) == 3


def test_inconsistent_verdict_exit_code(tmp_path):
    # the difference on a 16^3 box over a short window does not separate from u
    common = {"datum": {"family": "power-law", "q": 0.0, "kappa": 1.0}, "window": [8, 64],
              "grid": {"n_points": 16, "box_length": 16 * math.pi}, "time": {"dt": 1.0}}
    plan = {"cases": [dict(case_id="u", mode="nsv-grid", **common),
                      dict(case_id="w", mode="difference", matched_case="u", **common)]}
    (tmp_path / "plan.json").write_text(json.dumps(plan))
    assert run("-o", tmp_path, "verify", "--plan", tmp_path / "plan.json") == 4
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["cases"][1]["verdict"] == "INCONSISTENT"


def test_error_exit_codes(tmp_path, capsys):
    assert run("-o", tmp_path, "decay-character", tmp_path / "missing.json") == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and err["error"]
    (tmp_path / "bad.json").write_text("{not json")
    assert run("-o", tmp_path, "decay-character", tmp_path / "bad.json") == 2
    assert run("-o", tmp_path, "gen-datum", "--family", "power-law", "--q", -2) == 2
    (tmp_path / "plan.json").write_text('{"cases": [{"case_id": "x", "mode": "teleport", "datum": {"family": "annulus"}}]}')
    assert run("-o", tmp_path, "verify", "--plan", tmp_path / "plan.json") == 2
    with pytest.raises(SystemExit) as info:
        run("gen-datum", "--family", "power-law", "--frobnicate")
    assert info.value.code == 2


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    from nsvdecay import cli
    from nsvdecay.errors import QuadratureError

    def boom(*args, **kwargs):
        raise QuadratureError("did not converge", achieved=1e-3)

    monkeypatch.setattr(cli, "estimate_decay_character", boom)
    run("-o", tmp_path, "gen-datum", "--family", "power-law", "--q", 0)
    assert run("-o", tmp_path, "decay-character", tmp_path / "datum.json") == 3


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NSVDECAY_OUTPUT_DIR", str(tmp_path / "env"))
    assert run("gen-datum", "--family", "critical-log", "--kappa", 1) == 0
    assert (tmp_path / "env" / "datum.json").exists()
    assert (tmp_path / "env" / "manifest-gen-datum.json").exists()


def test_same_invocation_same_bytes(tmp_path):
    for d in ("x", "y"):
        run("-o", tmp_path / d, "gen-datum", "--family", "power-law", "--q", 0.5, "--seed", 3)
        run("-o", tmp_path / d, "evolve-linear", tmp_path / d / "datum.json", "--t0", 10, "--t1", 100, "--per-decade", 8)
    for name in ("datum.json", "series.csv"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()
    mx = json.loads((tmp_path / "x" / "manifest-evolve-linear.json").read_text())
    my = json.loads((tmp_path / "y" / "manifest-evolve-linear.json").read_text())
    assert mx["outputs"] == my["outputs"]
