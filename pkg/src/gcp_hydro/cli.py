"""Command-line entry point: one subcommand per named experiment.

    gcp-hydro <experiment> --config <file> [--set key=value ...] --out <dir>

Exit codes: 0 on pass (or for experiments without thresholds), 1 when a
declared threshold fails, 2 on config errors.  GCP_HYDRO_WORKERS and
GCP_HYDRO_SEED override the worker count and master seed.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import DEFAULTS, ConfigError, load_config, run, validate


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcp-hydro",
                                     description="Contact-process simulation and "
                                                 "verification experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in DEFAULTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override one config entry")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--validate-only", action="store_true",
                       help="check the config and exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.experiment, args.config, args.overrides)
    except ConfigError as exc:
        for item in exc.violations:
            print(f"config error: {item}", file=sys.stderr)
        return 2
    violations = validate(cfg)
    if violations:
        for item in violations:
            print(f"config error: {item}", file=sys.stderr)
        return 2
    if args.validate_only:
        print("config ok")
        return 0
    try:
        result = run(cfg, args.out)
    except ConfigError as exc:
        for item in exc.violations:
            print(f"config error: {item}", file=sys.stderr)
        return 2
    status = "pass" if result.passed else "fail" if result.passed is not None else "done"
    print(f"{result.experiment}: {status}")
    for path in result.csv_paths:
        print(f"  wrote {path}")
    print(f"  wrote {result.sidecar_path}")
    return 0 if (result.passed is None or result.passed) else 1


if __name__ == "__main__":
    sys.exit(main())
