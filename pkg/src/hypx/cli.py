"""Command line entry point: ``hypx run``, ``hypx sweep`` and ``hypx check``."""

from __future__ import annotations

import argparse
import logging
import sys

from hypx import checks, harness
from hypx.numerics import ConfigurationError


def _cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    overrides = {}
    if args.runs is not None:
        overrides["harness.n_runs"] = args.runs
    if args.seed is not None:
        overrides["harness.seed"] = args.seed
    if overrides:
        cfg = cfg.with_overrides(overrides)
    agg = harness.run_experiment(cfg, args.out, threads=args.threads)
    if agg.summaries:
        print(
            f"runs={cfg.n_runs} horizon={cfg.horizon} "
            f"mean_cum_regret={agg.mean_final_cum_regret:.6g} mean_avg_regret={agg.mean_avg_regret:.6g}"
        )
    return 0


def _cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    if not cfg.sweep:
        raise ConfigurationError("config has no [sweep] section")
    rows = harness.run_sweep(cfg, args.out, threads=args.threads)
    for row in rows:
        print(", ".join(f"{k}={v}" for k, v in row.items()))
    return 0


def _cmd_check(args) -> int:
    suites = checks.SUITES if args.suite == "all" else (args.suite,)
    ok = True
    for name in suites:
        res = checks.run_suite(name)
        print(res.report())
        ok &= res.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypx", description="Hypermodel bandit simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="directory for steps.csv, summary.csv, metadata.json")
    run.add_argument("--runs", type=int, default=None, help="override the number of runs")
    run.add_argument("--seed", type=int, default=None, help="override the base seed")
    run.add_argument("--threads", type=int, default=1, help="worker processes")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="run the grid in the config's [sweep] section")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--threads", type=int, default=1)
    sweep.set_defaults(func=_cmd_sweep)

    check = sub.add_parser("check", help="run an oracle suite; exit status 1 on failure")
    check.add_argument("--suite", required=True, choices=(*checks.SUITES, "all"))
    check.set_defaults(func=_cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"hypx: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
