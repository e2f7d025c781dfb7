"""Command-line experiment runner.

Usage:
    lcft-lab run <config.yaml> [--seed N] [--replicas N] [--out DIR]
    lcft-lab list
    lcft-lab validate <config.yaml>

Config files are YAML mappings with keys: kind, seed, replicas, out,
params.  Exit codes: 0 success, 2 configuration error, 3 precondition
error (e.g. Seiberg bounds), 4 numerical degeneracy.  The worker count
for parallel sub-tasks comes from LCFT_LAB_WORKERS (results are
independent of it).
"""

import argparse
import json
import sys

import yaml

from .errors import (
    ConfigError,
    NumericalDegeneracyError,
    PreconditionError,
)
from .runner import list_experiments, run_experiment, validate_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_DEGENERACY = 4


def _load_config(path: str) -> dict:
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    return doc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lcft-lab",
        description="Liouville CFT laboratory experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a YAML experiment config")
    p_run.add_argument("--seed", type=int, default=None, help="override master seed")
    p_run.add_argument("--replicas", type=int, default=None, help="override replica budget")
    p_run.add_argument("--out", default=None, help="override output directory")

    sub.add_parser("list", help="list the available experiment kinds")

    p_val = sub.add_parser("validate", help="schema-check a config without running it")
    p_val.add_argument("config", help="path to a YAML experiment config")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for kind, desc in list_experiments():
                print(f"{kind:16s} {desc}")
            return EXIT_OK
        doc = _load_config(args.config)
        if args.command == "validate":
            cfg = validate_config(doc)
            print(json.dumps(cfg, indent=2, sort_keys=True, default=str))
            return EXIT_OK
        # run
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.replicas is not None:
            doc["replicas"] = args.replicas
        if args.out is not None:
            doc["out"] = args.out
        cfg = validate_config(doc)
        record = run_experiment(cfg)
        paths = record.write(cfg["out"])
        for p in paths:
            print(p)
        print(f"verdicts: {'PASS' if record.passed else 'FAIL'} "
              f"({sum(record.verdicts.values())}/{len(record.verdicts)})")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NumericalDegeneracyError as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERACY


if __name__ == "__main__":
    sys.exit(main())
