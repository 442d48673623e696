"""Command-line entry point for the experiment harness.

Subcommands:

- ``run <experiment> [--config FILE] [--out DIR] [--seed N]``: execute
  one experiment and write ``results.json`` plus its CSV into the output
  directory. ``--seed`` overrides the configured seed, ``--out`` the
  configured output directory.
- ``list-experiments``: print every experiment with a one-line summary.
- ``validate-config <file>``: check a configuration file and report
  every problem.

Exit codes: 0 on success; 2 for an invalid configuration (the report
goes to stderr); 3 for a runtime numerical failure (the message names
the seed and, when known, the offending object).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exceptions import ConfigError, SkyProfilerError
from .experiments import (
    EXPERIMENT_NAMES,
    EXPERIMENT_SUMMARIES,
    config_from_dict,
    run_experiment,
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="skyprofiler",
        description="run reproducible tracking/classification experiments")
    commands = parser.add_subparsers(dest="command")

    run = commands.add_parser(
        "run", help="run one experiment and write its artifacts")
    run.add_argument("experiment", choices=EXPERIMENT_NAMES)
    run.add_argument("--config", help="JSON configuration file")
    run.add_argument("--out", help="output directory (overrides config)")
    run.add_argument("--seed", type=int,
                     help="random seed (overrides config)")

    commands.add_parser("list-experiments",
                        help="list available experiments")

    validate = commands.add_parser(
        "validate-config", help="check a configuration file")
    validate.add_argument("path")
    return parser


def _read_config_doc(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file: {exc}")
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}")
    return doc


def _resolve_run_config(args):
    doc = _read_config_doc(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise ConfigError("invalid configuration:\n"
                          "  - the configuration must be a JSON object")
    configured = doc.get("experiment")
    if configured is not None and configured != args.experiment:
        raise ConfigError(
            f"configuration is for experiment {configured!r} but "
            f"{args.experiment!r} was requested")
    doc = dict(doc)
    doc["experiment"] = args.experiment
    config = config_from_dict(doc, seed_override=args.seed)
    out_dir = args.out if args.out is not None else config.out_dir
    if out_dir is None:
        raise ConfigError("no output directory: pass --out or set "
                          "out_dir in the configuration")
    return config, out_dir


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)

    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    if args.command == "list-experiments":
        for name in EXPERIMENT_NAMES:
            print(f"{name:8s} {EXPERIMENT_SUMMARIES[name]}")
        return 0

    if args.command == "validate-config":
        try:
            config = config_from_dict(_read_config_doc(args.path))
        except ConfigError as exc:
            print(exc, file=sys.stderr)
            return 2
        print(f"configuration is valid: {config.experiment}, "
              f"seed {config.seed}")
        return 0

    # run
    try:
        config, out_dir = _resolve_run_config(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    try:
        run_experiment(config, out_dir)
    except SkyProfilerError as exc:
        print(f"runtime failure (seed {config.seed}): {exc}",
              file=sys.stderr)
        return 3
    print(f"{config.experiment}: results written to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
