"""Command-line entry point.

Every subcommand reads a JSON config (``--config``) with optional
``--set key.path=value`` overrides and writes its outputs under the
configured directory.  Exit codes: 0 success, 1 config error, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import apply_overrides, load_config
from .errors import ConfigError, FormatError, NumericalError, ParameterError, ShapeError
from . import runner

_SUBCOMMANDS = {
    "gen-data": runner.run_gen_data,
    "train-flow": runner.run_train_flow,
    "degrade": runner.run_degrade,
    "restore": runner.run_restore,
    "invert": runner.run_invert,
    "evaluate": runner.run_evaluate,
    "ablate-schedule": runner.run_ablate_schedule,
    "ablate-projection": runner.run_ablate_projection,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit 1
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="flowsteer", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name in _SUBCOMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="path to a JSON config")
        cmd.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config entry (dotted keys, JSON values)",
        )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required")
        cfg = apply_overrides(load_config(args.config), args.overrides)
        out = _SUBCOMMANDS[args.command](cfg)
        print(f"{args.command}: outputs written to {out}")
        return 0
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, FormatError, ParameterError, ShapeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
