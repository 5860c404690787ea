"""Command line: `hypclose {lyap,chart,close,code,entropy,budget} --config PATH [--seed N] [--out PATH]`.

Exit codes: 0 success, 1 usage error, 2 budget failure, 3 numerical failure.
Every failure is also written as an `error` record.
"""

import argparse
import logging
import sys
from dataclasses import replace

from . import runs
from .config import ConfigError, load_config
from .records import RecordSink


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="hypclose", description="Pesin charts, closing and coding runs.")
    p.add_argument("command", help="one of: " + ", ".join(runs.TASKS))
    p.add_argument("--config", required=True, help="key=value config file")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", default=None, help="record file ('-' for stdout); overrides the config")
    p.add_argument("--override-budget", action="store_true", help="run past a failing budget (recorded)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run_cli(argv=None, stdout=None):
    stdout = sys.stdout if stdout is None else stdout
    try:
        args = build_parser().parse_args(argv)
        if args.command not in runs.TASKS:
            raise UsageError(f"unknown subcommand {args.command!r}")
    except UsageError as exc:
        print(f"hypclose: {exc}", file=sys.stderr)
        return runs.USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"hypclose: {exc}", file=sys.stderr)
        sink = RecordSink(args.out or "-", "", args.seed or 0)
        sink.emit("error", kind="usage", message=str(exc))
        sink.flush(stdout)
        return runs.USAGE
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    sink = RecordSink(cfg.out, cfg.hash(), cfg.seed)
    try:
        code = runs.TASKS[args.command](cfg, sink, override=args.override_budget)
    except runs.BudgetFailure as exc:
        sink.emit("error", kind="budget", message=str(exc))
        code = runs.BUDGET
    except runs.USAGE_ERRORS as exc:
        sink.emit("error", kind="usage", message=str(exc))
        code = runs.USAGE
    except (runs.NumericalFailure, ValueError) + runs.NUMERICAL_ERRORS as exc:
        sink.emit("error", kind="numerical", message=f"{type(exc).__name__}: {exc}")
        code = runs.NUMERICAL
    sink.flush(stdout)
    return code


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
