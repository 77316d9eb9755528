"""Command line entry point: ``nomascma run|oracle|complexity``."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import OracleTooLargeError, SweepSpec, brute_force_oracle, emit, run_sweep
from .complexity import complexity_table, reference_rows, render_csv, render_text
from .config import SolverConfig
from .hetnet import generate_scenario, load_network_config

__all__ = ["main", "build_parser"]


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nomascma", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="sweep user or small-cell counts and compare NOMA with SCMA")
    run.add_argument("--scenario", required=True, help="network config file (key=value lines)")
    run.add_argument("--sweep", required=True, choices=["users", "cells"])
    run.add_argument("--values", required=True, type=_int_list, help="e.g. 4,6,8,10")
    run.add_argument("--seeds", type=_positive, default=20, help="use seeds 1..n (default 20)")
    run.add_argument("--out", required=True, help="output file")
    run.add_argument("--format", choices=["csv", "plotdata"], default="csv")
    run.add_argument("--bits", action="store_true", help="report rates in bits instead of nats")
    run.add_argument(
        "--literal-scma-interference",
        action="store_true",
        help="SCMA interference only between identical codebooks, without power shares",
    )
    run.add_argument("--strict", action="store_true", help="exit nonzero if any scenario fails")
    run.add_argument("--timing", action="store_true", help="record wall time per scenario")
    run.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")

    oracle = sub.add_parser("oracle", help="exhaustive optimum of a tiny scenario")
    oracle.add_argument("--scenario", required=True)
    oracle.add_argument("--scheme", required=True, choices=["noma", "scma"])
    oracle.add_argument("--grid", type=_positive, default=100, help="power levels per link")

    comp = sub.add_parser("complexity", help="receiver operation counts")
    comp.add_argument("--table", action="store_true", help="audit the published two-row table")
    comp.add_argument("--csv", action="store_true", help="CSV instead of aligned text")
    return parser


def _cmd_run(args) -> int:
    base = load_network_config(args.scenario)
    solver = SolverConfig(literal_scma_interference=args.literal_scma_interference)
    spec = SweepSpec(
        axis=args.sweep,
        values=tuple(args.values),
        seeds=tuple(range(1, args.seeds + 1)),
        base=base,
        solver=solver,
        timing=args.timing,
        n_jobs=args.jobs,
    )
    result = run_sweep(spec)
    emit(result, args.out, args.format, args.bits)
    failures = result.failures
    for row in failures:
        print(f"{row.axis}={row.axis_value} seed={row.seed}: {row.error}", file=sys.stderr)
    if failures and args.strict:
        print(f"{len(failures)} of {len(result.rows)} scenarios failed", file=sys.stderr)
        return 1
    return 0


def _cmd_oracle(args) -> int:
    cfg = load_network_config(args.scenario)
    state = generate_scenario(cfg, seed=cfg.seed)
    try:
        res = brute_force_oracle(state, args.scheme, args.grid)
    except OracleTooLargeError as exc:
        print(f"instance too large: {exc}", file=sys.stderr)
        return 2
    print(f"scheme={args.scheme} sum_rate_nats={res.sum_rate!r} assignments={res.assignments} method={res.method}")
    for v in map(int, res.x.nonzero()[0]):
        print(f"link {v} p_w={float(res.p[v])!r}")
    return 0


def _cmd_complexity(args) -> int:
    if not args.table:
        print("nothing to do; pass --table", file=sys.stderr)
        return 2
    table = complexity_table(reference_rows())
    sys.stdout.write(render_csv(table) if args.csv else render_text(table))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.ERROR, logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 3)])
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        return _cmd_complexity(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
