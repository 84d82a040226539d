"""Command-line front end: ``bcostar run|aggregate|plot|theory``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure (including
any failed seed).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import harness

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bcostar", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run every seed of an experiment config")
    run.add_argument("config")
    run.add_argument("--seed-offset", type=int, default=0)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--output", help="override output_dir")

    agg = sub.add_parser("aggregate", help="mean and std of normalized reward across run directories")
    agg.add_argument("run_dirs", nargs="+")
    agg.add_argument("--output", default="aggregate.csv")

    plt = sub.add_parser("plot", help="render an aggregate CSV as SVG")
    plt.add_argument("aggregate_csv")
    plt.add_argument("--output", default="plot.svg")
    plt.add_argument("--x", choices=["iter", "interactions"], default="iter")
    plt.add_argument("--title")

    th = sub.add_parser("theory", help="tabulate bounds and the recurrence/ODE comparison")
    th.add_argument("grid_config")
    th.add_argument("--output", default="theory")
    return p


def _run(args) -> int:
    cfg = harness.load_config(args.config)
    if args.jobs < 1:
        raise harness.ConfigError("--jobs must be at least 1")
    result = harness.run_experiment(cfg, jobs=args.jobs, seed_offset=args.seed_offset, output_dir=args.output)
    for run in result.runs:
        print(f"{run.run_dir}: final normalized reward {run.final['final_normalized_reward']:.4f}")
    if result.aggregate_path:
        print(f"aggregate: {result.aggregate_path}")
    for err in result.failures:
        print(f"FAILED {err}", file=sys.stderr)
    return EXIT_RUNTIME if result.failures else EXIT_OK


def _aggregate(args) -> int:
    missing = [d for d in args.run_dirs if not (Path(d) / "metrics.csv").is_file()]
    if missing:
        raise harness.ConfigError(f"no metrics.csv in {missing}")
    harness.write_aggregate(harness.aggregate(args.run_dirs), args.output)
    print(args.output)
    return EXIT_OK


def _plot(args) -> int:
    if not Path(args.aggregate_csv).is_file():
        raise harness.ConfigError(f"no such file {args.aggregate_csv}")
    print(harness.plot(args.aggregate_csv, args.output, x=args.x, title=args.title))
    return EXIT_OK


def _theory(args) -> int:
    try:
        grid = yaml.safe_load(Path(args.grid_config).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise harness.ConfigError(f"cannot read grid config: {exc}") from exc
    harness.theory_report(grid, args.output)
    print(args.output)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    handler = {"run": _run, "aggregate": _aggregate, "plot": _plot, "theory": _theory}[args.command]
    try:
        return handler(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
