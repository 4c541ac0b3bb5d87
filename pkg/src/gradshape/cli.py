"""Command-line front end: scenario files in, reports out.

Subcommands: selftest | calibrate | run {operator|gap-sweep|variance|
stream|exposure|blocks}.  Exit codes: 0 success, 1 runtime failure,
2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .errors import ConfigError, GradShapeError
from .sandbox import (
    RUNNERS,
    make_report,
    report_csv,
    report_json,
    run_calibration,
    write_report,
)
from .scenario import Scenario, load_scenario_file
from .selftest import run_selftest

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradshape",
        description="Randomized gradient shaping: identity self-tests and "
        "deterministic quadratic-sandbox experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_self = sub.add_parser("selftest", help="run the closed-form identity suite")
    p_self.add_argument("--json", action="store_true", help="machine-readable residual table")

    p_cal = sub.add_parser("calibrate", help="calibrate the deviation-bound constant")
    p_cal.add_argument("--out", default=None, help="directory for the calibration report")
    p_cal.add_argument("--seed", type=int, default=None, help="seed override (recorded)")
    p_cal.add_argument("--workers", type=int, default=1)
    p_cal.add_argument("--json", action="store_true")
    p_cal.add_argument("--csv", action="store_true")

    p_run = sub.add_parser("run", help="run a sandbox experiment")
    p_run.add_argument("experiment", choices=sorted(RUNNERS))
    p_run.add_argument("--scenario", required=True, help="scenario JSON (or a previous report)")
    p_run.add_argument("--out", default=None, help="output directory for report files")
    p_run.add_argument("--seed", type=int, default=None, help="seed override")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--json", action="store_true", help="write the JSON report (default)")
    p_run.add_argument("--csv", action="store_true", help="write the CSV view as well")
    return parser


def _summary_line(kind: str, payload: dict) -> str:
    if kind == "operator":
        return (
            f"operator: relative eigenvalue error {payload['relative_eigenvalue_error']:.4e} "
            f"(rotated {payload['rotated']['relative_eigenvalue_error']:.4e})"
        )
    if kind == "gap-sweep":
        z = payload["zero_crossing"]
        return (
            f"gap-sweep: R^2 {payload['r_squared']:.6f}, zero-crossing gap "
            f"{z['empirical_gap']:.3e} (3 SE {'ok' if z['within_3_se'] else 'exceeded'})"
        )
    if kind == "variance":
        parts = ", ".join(f"q={p['q']}: {p['ratio']:.3f}" for p in payload["points"])
        return f"variance: blockwise/global std ratio {parts}"
    if kind == "stream":
        cells = ", ".join(
            f"{m['method']}: Fgt {m['fgt_mean']:.4f} Last {m['last_mean']:.4f}"
            for m in payload["methods"]
        )
        return f"stream[{payload['kind']}]: {cells}"
    if kind == "exposure":
        return (
            f"exposure: max closing-factor residual {payload['max_gap_closing_residual']:.2e}, "
            f"minimax uniqueness {'ok' if payload['minimax_uniqueness']['all_above_optimum'] else 'FAILED'}"
        )
    if kind == "blocks":
        return (
            f"blocks: predicted gap {payload['predicted_gap']:.4e} vs MC "
            f"{payload['mc_gap']:.4e} (3 SE {'ok' if payload['within_3_se'] else 'exceeded'}), "
            f"coupling {payload['coupling_epsilon']:.3f}"
        )
    if kind == "calibrate":
        return (
            f"calibrate: constant {payload['constant']:.4g}, min coverage "
            f"{payload['min_coverage']:.3f}, holdout {payload['min_holdout_coverage']:.3f}"
        )
    return kind


def _cmd_selftest(args) -> int:
    rows = run_selftest()
    if args.json:
        print(json.dumps({"identities": rows}, indent=2, sort_keys=True))
    else:
        width = max(len(r["identity"]) for r in rows)
        for r in rows:
            status = "pass" if r["passed"] else "FAIL"
            print(
                f"{r['identity']:<{width}}  residual {r['residual']:.3e}  "
                f"tol {r['tolerance']:.0e}  {status}"
            )
    failing = [r for r in rows if not r["passed"]]
    if failing:
        print(f"selftest FAILED: {failing[0]['identity']}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    report = run_calibration(workers=args.workers)
    if args.seed is not None:
        report["metadata"]["seed"] = args.seed
    print(_summary_line("calibrate", report["payload"]))
    if args.out:
        paths = write_report(report, args.out, want_json=True, want_csv=args.csv)
        for p in paths:
            print(f"wrote {p}")
    elif args.json:
        print(report_json(report))
    return EXIT_OK


def _cmd_run(args) -> int:
    sc, embedded_seed = load_scenario_file(args.scenario)
    seed = args.seed if args.seed is not None else embedded_seed
    if seed is not None and seed != sc.seed:
        sc = dataclasses.replace(sc, seed=int(seed))
    runner = RUNNERS[args.experiment]
    report = runner(sc, workers=args.workers)
    print(_summary_line(report["metadata"]["kind"], report["payload"]))
    if args.out:
        paths = write_report(report, args.out, want_json=True, want_csv=args.csv)
        for p in paths:
            print(f"wrote {p}")
    elif args.json:
        print(report_json(report))
    elif args.csv:
        print(report_csv(report), end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, matching the config-error contract
        return int(exc.code) if exc.code else EXIT_OK
    try:
        if args.command == "selftest":
            return _cmd_selftest(args)
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        return _cmd_run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GradShapeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
