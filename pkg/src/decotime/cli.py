"""Command line entry point: ``decotime run|poles|validate <scenario>``."""
from __future__ import annotations

import argparse
import sys

from .errors import ScenarioError
from .scenario import (
    EXIT_ERROR,
    EXIT_OK,
    execute,
    load_scenario,
    poles_csv,
    resolve_threads,
    run_scenario,
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="scenario JSON file")
    common.add_argument("--quad-tol", type=float, default=None,
                        help="relative tolerance of the time-domain quadrature (overrides the scenario)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for time series; DECOTIME_THREADS takes precedence")
    common.add_argument("--seed", type=int, default=None,
                        help="reserved; accepted and ignored (all algorithms are deterministic)")

    parser = argparse.ArgumentParser(prog="decotime", description="Decoherence times from poles and time evolution.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run a scenario and write its reports")
    run.add_argument("--out", required=True, help="output directory")
    sub.add_parser("poles", parents=[common], help="print the scenario's poles as CSV")
    sub.add_parser("validate", parents=[common], help="check a scenario file against the schema")
    return parser


def _load(args):
    sc = load_scenario(args.scenario)
    if args.quad_tol is not None:
        if not args.quad_tol > 0:
            raise ScenarioError("--quad-tol must be positive")
        sc = sc.model_copy(update={"quadrature": sc.quadrature.model_copy(update={"rel_tol": args.quad_tol})})
    return sc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = _load(args)
        threads = resolve_threads(args.threads)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    if args.command == "validate":
        print(f"valid: {sc.name} ({sc.model.kind})")
        return EXIT_OK
    if args.command == "poles":
        report = execute(sc.model_copy(update={"evolution": None}), threads)
        sys.stdout.write(poles_csv(report.poles))
        for msg in report.warnings:
            print(f"warning: {msg}", file=sys.stderr)
        for err in report.errors:
            print(f"error: {err['type']}: {err['message']}", file=sys.stderr)
        return report.status

    report = run_scenario(sc, args.out, threads)
    for msg in report.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    for err in report.errors:
        print(f"error: {err['type']}: {err['message']}", file=sys.stderr)
    for label, est in report.estimates:
        print(f"{label:24s} t_D = {est.t_D:.6e} s   gamma = {est.gamma:.6e} eV")
    return report.status


if __name__ == "__main__":
    sys.exit(main())
