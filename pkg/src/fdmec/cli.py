"""Command line: ``fdmec run`` for experiment sweeps, ``fdmec solve`` for one slot."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .baselines import solve_scheme
from .bcd import STATUS_INFEASIBLE, SolveSettings
from .errors import ConfigurationError
from .experiments import SCHEMES, ExperimentSpec, run_experiment, stderr_progress
from .units import load_problem_document

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdmec", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment spec and write CSV files")
    run.add_argument("spec", help="experiment spec JSON")
    run.add_argument("--out", help="output directory (overrides output_dir in the spec)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--quiet", action="store_true", help="no progress counter")

    solve = sub.add_parser("solve", help="solve one scenario document and print the report JSON")
    solve.add_argument("scenario", help="scenario JSON (system + scenario or users/groups)")
    solve.add_argument("--scheme", choices=SCHEMES, default="proposed")
    solve.add_argument("--max-iterations", type=int, default=100)
    solve.add_argument("--tol", type=float, default=1e-6)
    return parser


def _cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    if args.workers < 1:
        raise ConfigurationError("--workers must be at least 1")
    out = run_experiment(spec, args.out, args.workers, None if args.quiet else stderr_progress)
    print(f"solved {len(out['solved'])}, infeasible {len(out['infeasible'])}", file=sys.stderr)
    return EXIT_OK


def _cmd_solve(args) -> int:
    users, partition, cfg = load_problem_document(args.scenario)
    try:
        settings = SolveSettings(max_outer_iterations=args.max_iterations,
                                 relative_objective_tol=args.tol)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    report = solve_scheme(args.scheme, users, partition, cfg, settings)
    json.dump(report.to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_INFEASIBLE if report.status == STATUS_INFEASIBLE else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_solve(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
