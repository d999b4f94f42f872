"""Command-line front end: ``nsvdecay <subcommand> ...``.

Every invocation writes ``manifest-<subcommand>.json`` next to its outputs.
Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 a verification
case came out INCONSISTENT.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .decay_character import estimate_decay_character, make_datum, read_datum_file, write_datum_file
from .errors import NSVError, NumericalError, ValidationError
from .linear import linear_norm_series
from .series import CSV_HEADER, NormSeries, log_times, per_decade_slopes
from .solver import check_lemma_bound, config_from_dict, energy_balance_residual, run_simulation, with_nonlinearity
from .spectral import PhysicsParams, write_snapshot
from .verification import VerificationPlan, VerificationReport, default_plan, run_verification

OUTPUT_ENV = "NSVDECAY_OUTPUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_INCONSISTENT = 0, 2, 3, 4

log = logging.getLogger("nsvdecay")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, params: dict, inputs: list[Path], outputs: list[Path]) -> Path:
    blob = json.dumps(params, sort_keys=True, default=str)
    manifest = {
        "subcommand": command,
        "parameters": json.loads(blob),
        "parameter_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p.relative_to(out)): _sha256(p) for p in outputs},
        "versions": {
            "nsvdecay": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    path = out / f"manifest-{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _output_dir(args) -> Path:
    out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params_of(args) -> dict:
    skip = {"func", "output_dir", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# --- subcommands ---------------------------------------------------------------


def cmd_gen_datum(args, out: Path):
    extra = {k: getattr(args, k) for k in ("q", "kappa", "delta") if getattr(args, k) is not None}
    datum = make_datum(args.family, n=args.n, seed=args.seed, **extra)
    path = out / args.name
    write_datum_file(path, datum)
    print(path)
    return [], [path], EXIT_OK


def cmd_decay_character(args, out: Path):
    datum = read_datum_file(args.datum)
    est = estimate_decay_character(datum, s=args.s)
    text = json.dumps(est.to_dict(), indent=2) + "\n"
    path = out / "decay_character.json"
    path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return [Path(args.datum)], [path], EXIT_OK


def cmd_evolve_linear(args, out: Path):
    datum = read_datum_file(args.datum)
    params = PhysicsParams(args.alpha, args.nu, datum.n)
    series = linear_norm_series(datum, log_times(args.t0, args.t1, args.per_decade), params)
    path = out / args.name
    series.to_csv(path)
    print(path)
    return [Path(args.datum)], [path], EXIT_OK


def cmd_solve(args, out: Path):
    cfg_path = Path(args.config)
    try:
        raw = json.loads(cfg_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{cfg_path}: not valid JSON ({exc})") from exc
    config = config_from_dict(raw, base_dir=cfg_path.parent)
    if args.linear:
        config = with_nonlinearity(config, False)
    traj = run_simulation(config)
    outputs = []
    series_path = out / "series.csv"
    traj.series.to_csv(series_path)
    outputs.append(series_path)

    resid = energy_balance_residual(traj)
    diag_path = out / "diagnostics.csv"
    rows = np.column_stack([traj.series.times, resid, traj.divergence, traj.cumulative_l2])
    with open(diag_path, "w", encoding="utf-8") as fh:
        fh.write("t,energy_residual,divergence,cumulative_l2\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    outputs.append(diag_path)

    snap_dir = out / "snapshots"
    if traj.snapshots:
        snap_dir.mkdir(exist_ok=True)
    for t, f in sorted(traj.snapshots.items()):
        p = snap_dir / f"t{t:012.4f}.snap"
        write_snapshot(p, f, config.params)
        outputs.append(p)

    lemma = check_lemma_bound(traj) if traj.snapshots else None
    summary = {
        "config": config.summary(),
        "max_energy_residual": float(np.max(np.abs(resid))),
        "max_divergence": float(np.max(traj.divergence)),
        "dt_final": traj.dt_final,
        "warnings": traj.warnings,
        "lemma": lemma._asdict() if lemma else None,
        "outside_hypotheses": not config.params.within_hypotheses,
    }
    traj_path = out / "trajectory.json"
    traj_path.write_text(json.dumps(summary, indent=2, default=float) + "\n", encoding="utf-8")
    outputs.append(traj_path)
    print(traj_path)
    inputs = [cfg_path]
    return inputs, outputs, EXIT_OK


def cmd_verify(args, out: Path):
    inputs = []
    if args.plan == "default":
        plan = default_plan()
    else:
        plan = VerificationPlan.from_json(Path(args.plan).read_text(encoding="utf-8"))
        inputs.append(Path(args.plan))
    report = run_verification(plan, jobs=args.jobs)
    path = out / "report.json"
    path.write_text(report.to_json(), encoding="utf-8")
    for case_id, verdict in report.verdicts.items():
        print(f"{case_id}: {verdict}")
    return inputs, [path], EXIT_INCONSISTENT if report.inconsistent else EXIT_OK


def _local_slopes(series: NormSeries) -> np.ndarray:
    t, y = series.times, series.h1alpha_sq
    ok = (t > 0) & (y > 0)
    slopes = np.full(t.size, np.nan)
    if ok.sum() >= 3:
        slopes[ok] = -np.gradient(np.log(y[ok]), np.log(t[ok]))
    return slopes


def cmd_report(args, out: Path):
    src = Path(args.input)
    outputs = []
    if src.suffix == ".csv":
        series = NormSeries.from_csv(src)
        path = out / f"{src.stem}.dat"
        slopes = _local_slopes(series)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# " + " ".join(CSV_HEADER) + " local_slope\n")
            for row in zip(series.times, series.l2_sq, series.h1dot_sq, series.h1alpha_sq, slopes):
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        outputs.append(path)
        if args.decades:
            marks = [float(m) for m in args.decades.split(",")]
            print(json.dumps({"per_decade_slopes": per_decade_slopes(series, marks).tolist()}))
    else:
        try:
            report = VerificationReport.from_json(src.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{src}: neither a series CSV nor a report ({exc})") from exc
        path = out / "verdicts.csv"
        cols = ("case_id", "mode", "r_star", "predicted", "measured", "residual", "verdict")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for case in report.cases:
                fh.write(",".join("" if case.get(c) is None else str(case.get(c)) for c in cols) + "\n")
        outputs.append(path)
    for p in outputs:
        print(p)
    return [src], outputs, EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsvdecay", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-o", "--output-dir", help=f"output directory (default: ${OUTPUT_ENV} or .)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-datum", help="write a datum description file")
    p.add_argument("--family", required=True, choices=("power-law", "annulus", "critical-log"))
    p.add_argument("--q", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="datum.json")
    p.set_defaults(func=cmd_gen_datum)

    p = sub.add_parser("decay-character", help="estimate r* of a datum file")
    p.add_argument("datum")
    p.add_argument("--s", type=float, default=0.0)
    p.set_defaults(func=cmd_decay_character)

    p = sub.add_parser("evolve-linear", help="linear H^1_alpha decay series by quadrature")
    p.add_argument("datum")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--nu", type=float, default=0.05)
    p.add_argument("--t0", type=float, default=1e2)
    p.add_argument("--t1", type=float, default=1e4)
    p.add_argument("--per-decade", type=int, default=64)
    p.add_argument("--name", default="series.csv")
    p.set_defaults(func=cmd_evolve_linear)

    p = sub.add_parser("solve", help="run the pseudo-spectral solver from a JSON config")
    p.add_argument("config")
    p.add_argument("--linear", action="store_true", help="disable the nonlinear term")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run a verification plan")
    p.add_argument("--plan", default="default", help="'default' or a plan JSON file")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="plot-ready data from a series CSV or a report JSON")
    p.add_argument("input")
    p.add_argument("--decades", help="comma-separated marks for per-decade slopes")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        out = _output_dir(args)
        inputs, outputs, code = args.func(args, out)
        _write_manifest(out, args.command, _params_of(args), inputs, outputs)
    except (ValidationError, OSError) as exc:
        return _fail(EXIT_INVALID, exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except NSVError as exc:
        return _fail(EXIT_INVALID, exc)
    return code


def _fail(code: int, exc: Exception) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    achieved = getattr(exc, "achieved", None)
    if achieved is not None:
        payload["achieved_tolerance"] = achieved
    print(json.dumps(payload), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
