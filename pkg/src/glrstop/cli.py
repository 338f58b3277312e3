"""Command-line front end.

Batch work (experiment runs, boundary tables, oracle suites) executes
in-process; ``serve`` exposes the same toolkit as an HTTP service.  Exit
status is 0 only on full success: censored replications (without
--allow-censor) and failed oracle suites exit nonzero, configuration
errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigurationError, PreconditionError
from .harness import ExperimentConfig, emit_boundary_csv, run_experiment, write_results_csv
from .oracles import ORACLE_SUITES, run_suites


def _cmd_run(args: argparse.Namespace) -> int:
    payload = json.loads(Path(args.config).read_text())
    if args.reps is not None:
        payload["replications"] = args.reps
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.out is not None:
        payload["output"] = args.out
    config = ExperimentConfig.from_dict(payload)
    report = run_experiment(config, workers=args.workers)

    std = "nan" if report.std_ssize != report.std_ssize else f"{report.std_ssize:.2f}"
    print(f"replications: {report.replications}")
    print(f"avg stop time: {report.avg_ssize:.2f} (std {std})")
    print(f"empirical P1: {report.empirical_p1:.4f}")
    print(f"empirical P2: {report.empirical_p2:.4f}")
    print(f"censored: {report.censor_count}")
    print(f"wall time: {report.wall_time_s:.1f}s")
    if config.output:
        write_results_csv(report, config.output)
        print(f"results: {config.output}")
    if report.censor_count and not args.allow_censor:
        print(
            f"error: {report.censor_count} replication(s) censored at "
            f"t_max={config.t_max} (pass --allow-censor to accept)",
            file=sys.stderr,
        )
        return 1
    return 0


def _cmd_boundary(args: argparse.Namespace) -> int:
    alphas = [float(a) for a in args.alpha.split(",") if a.strip()]
    if not alphas:
        raise ConfigurationError("need at least one alpha")
    emit_boundary_csv(alphas, args.out, t_max=int(float(args.tmax)))
    print(f"boundary table: {args.out}")
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    names = args.suite or None
    rows = run_suites(names, reps=args.reps, seed=args.seed)
    width = max(len(r.suite) for r in rows)
    failures = 0
    for r in rows:
        status = "PASS" if r.passed else "FAIL"
        failures += not r.passed
        print(f"{status}  {r.suite:<{width}}  {r.metric}: {r.value:.6g}  ({r.requirement})")
    print(f"{len(rows) - failures}/{len(rows)} checks passed")
    return 0 if failures == 0 else 1


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level=args.log_level)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glrstop",
        description="Sequential stopping certification for contextual selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment from a JSON config")
    run.add_argument("--config", required=True, help="JSON experiment config file")
    run.add_argument("--reps", type=int, default=None, help="override replication count")
    run.add_argument("--seed", type=int, default=None, help="override the base seed")
    run.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    run.add_argument("--out", default=None, help="write per-replication results CSV here")
    run.add_argument(
        "--allow-censor",
        action="store_true",
        help="exit 0 even when some replications hit the stage cap",
    )
    run.set_defaults(func=_cmd_run)

    boundary = sub.add_parser("boundary", help="tabulate stopping thresholds to CSV")
    boundary.add_argument(
        "--alpha", required=True, help="comma-separated list, e.g. 0.05,0.01"
    )
    boundary.add_argument("--tmax", default="1e8", help="largest stage in the grid")
    boundary.add_argument("--out", default="boundary.csv", help="output CSV path")
    boundary.set_defaults(func=_cmd_boundary)

    oracle = sub.add_parser("oracle", help="run the Monte Carlo validation suites")
    oracle.add_argument(
        "--suite",
        action="append",
        choices=sorted(ORACLE_SUITES),
        help="suite to run (repeatable; default: all)",
    )
    oracle.add_argument("--reps", type=int, default=None, help="override replication count")
    oracle.add_argument("--seed", type=int, default=None, help="override the suite seed")
    oracle.set_defaults(func=_cmd_oracle)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--log-level", default="info")
    serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
