"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

The default verification plan is run once through the command line and its
report shared by every criterion; expect several minutes of runtime.
"""
import json
import math

import numpy as np
import pytest

from nsvdecay.cli import main
from nsvdecay.decay_character import Sentinel, estimate_decay_character, make_datum
from nsvdecay.linear import evolve_linear, grid_linear_norm_series
from nsvdecay.solver import SolverConfig, desk_config, energy_balance_residual, nonlinear_flux, rk4_step, run_simulation
from nsvdecay.spectral import Grid, PhysicsParams, SpectralVectorField, random_solenoidal_field


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    out = tmp_path_factory.mktemp("verify")
    code = main(["-o", str(out), "verify", "--plan", "default"])
    data = json.loads((out / "report.json").read_text())
    return code, {c["case_id"]: c for c in data["cases"]}


@pytest.fixture(scope="module")
def linear_desk_run():
    cfg = desk_config(make_datum("power-law", q=0.0, kappa=0.25), nonlinear=False)
    traj = run_simulation(cfg)
    return traj


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_linear_sharp_rate(report, capsys):
    _, cases = report
    rows = []
    ok = True
    for q in (-1, 0, 1, 2):
        c = cases[f"linear-q{q}"]
        good = abs(c["measured"] - (1.5 + q)) <= 0.1 and c["window"] == [100.0, 10000.0]
        ok &= good
        rows.append(f"q={q}: {c['measured']:.4f} vs {1.5 + q}")
    verdict(capsys, 1, ok, "; ".join(rows))


def test_criterion_2_sentinel_slope_drift(report, capsys):
    _, cases = report
    fast = np.array(cases["linear-annulus"]["local_slopes"])
    slow = np.array(cases["linear-critical-log"]["local_slopes"])
    ok_fast = fast[-1] - fast[0] >= 1 and np.all(np.diff(fast) > 0)
    ok_slow = np.all(slow > 0) and np.all(np.diff(slow) < 0)
    verdict(capsys, 2, bool(ok_fast and ok_slow),
            f"annulus slopes {np.round(fast, 3).tolist()}, critical-log slopes {np.round(slow, 3).tolist()}")


def test_criterion_3_nsv_rate(report, capsys):
    _, cases = report
    c = cases["nsv-q0"]
    ok = c["measured"] >= 1.5 - 0.15 and c["window"][1] <= c["trustworthy_time"] and c["predicted"] == pytest.approx(1.5)
    verdict(capsys, 3, ok, f"measured {c['measured']:.4f} over {c['window']} (cap {c['trustworthy_time']:g})")


def test_criterion_4_saturation(report, capsys):
    _, cases = report
    c = cases["nsv-q2"]
    ok = c["predicted"] == 2.5 and c["measured"] >= 2.5 - 0.15
    verdict(capsys, 4, ok, f"predicted {c['predicted']}, measured {c['measured']:.4f}")


def test_criterion_5_difference_decays_faster(report, capsys):
    _, cases = report
    c = cases["difference-q0"]
    ok = c["gap"] >= 0.5 and c["verdict"] == "UPPER_BOUND_SATISFIED"
    verdict(capsys, 5, ok,
            f"w exponent {c['measured']:.4f}, u exponent {c['matched_exponent']:.4f}, gap {c['gap']:.4f}; "
            f"against 9/4 (informational): {'reached' if c['absolute_check'] else 'not reached'}")


def test_criterion_6_energy_equality(report, linear_desk_run, capsys):
    _, cases = report
    worst = {cid: c["diagnostics"]["max_energy_residual"] for cid, c in cases.items() if "diagnostics" in c}
    worst["linear-desk"] = float(np.max(np.abs(energy_balance_residual(linear_desk_run))))
    ok = all(v <= 1e-6 for v in worst.values())
    verdict(capsys, 6, ok, ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


def test_criterion_7_oracle_equivalences(linear_desk_run, capsys):
    # linear-only desk run against the exact multiplier
    s = linear_desk_run.series
    exact = grid_linear_norm_series(linear_desk_run.initial, s.times, linear_desk_run.config.params)
    lin_err = float(np.max(np.abs(s.h1alpha_sq / exact.h1alpha_sq - 1)))

    # RK4 convergence at a fixed terminal time against the exact multiplier
    p = PhysicsParams(0.1, 0.05)
    g = Grid(8, 2 * math.pi)
    u0 = random_solenoidal_field(g, np.random.default_rng(0), h1alpha=1.0, params=p)
    target = evolve_linear(u0, 2.0, p)
    errs = []
    for dt in (0.2, 0.1):
        cfg = SolverConfig(g, p, dt, 2.0, nonlinear=False)
        u = u0
        for _ in range(int(round(2.0 / dt))):
            u = rk4_step(u, dt, cfg)
        errs.append(np.max(np.abs(u.coefficients - target.coefficients)))
    ratio = errs[0] / errs[1]

    # Taylor-Green convective term is a pure gradient
    tg = Grid(16, 2 * math.pi)
    x, y, _ = tg.coordinates
    u = np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y), np.zeros_like(x)])
    tg_flux = float(np.max(np.abs(nonlinear_flux(SpectralVectorField.from_physical(tg, u)).coefficients)))

    # estimator on every built-in family
    est_ok = True
    for d in (make_datum("power-law", q=q, kappa=1.0) for q in (-1.0, 0.0, 1.0, 2.0)):
        est_ok &= abs(estimate_decay_character(d).r_star - d.analytic_r_star) <= 0.05
    est_ok &= estimate_decay_character(make_datum("annulus", delta=0.1, kappa=0.2)).sentinel is Sentinel.INFINITY
    est_ok &= estimate_decay_character(make_datum("critical-log", kappa=1.0)).sentinel is Sentinel.MINUS_N_HALF

    ok = lin_err <= 1e-8 and abs(ratio - 16) <= 0.2 * 16 and tg_flux <= 1e-12 and est_ok
    verdict(capsys, 7, ok,
            f"linear vs multiplier {lin_err:.2e}, RK4 ratio {ratio:.2f}, Taylor-Green flux {tg_flux:.1e}, "
            f"estimator {'ok' if est_ok else 'off'}")


def test_criterion_8_lemma_bound(report, capsys):
    _, cases = report
    lemma = cases["nsv-q0"]["diagnostics"]["lemma"]
    c = lemma["c_required"]
    ok = lemma["passed"] and isinstance(c, float) and math.isfinite(c)
    verdict(capsys, 8, ok, f"fitted constant {c}, {lemma['n_checked']} (k, t) samples")


def test_default_plan_cli_exit_status(report, capsys):
    code, cases = report
    allowed = {"CONSISTENT", "UPPER_BOUND_SATISFIED"}
    bad = {k: c["verdict"] for k, c in cases.items() if c["verdict"] not in allowed}
    with capsys.disabled():
        print(f"\nverify --plan default: exit {code}, verdicts {sorted(set(c['verdict'] for c in cases.values()))}")
    assert code == 0 and not bad, bad
