"""Command-line entry point.

    dislocdyn run CONFIG [--set section.key=value ...] [--output-dir DIR]
    dislocdyn single|eps-sweep|resolution-sweep|verify-suite|picard-compare CONFIG ...
    dislocdyn echo-config CONFIG

Exit codes: 0 all checks passed, 1 a verification failed, 2 runtime error,
3 configuration error. Relative output directories are placed under
``$DISLOCDYN_OUTPUT_ROOT`` when it is set.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, dump_config, parse_config
from .experiments import EXIT_CONFIG_ERROR, run_experiment

SUBCOMMAND_MODES = {
    "single": "single",
    "eps-sweep": "eps_sweep",
    "resolution-sweep": "resolution_sweep",
    "verify-suite": "verify_suite",
    "picard-compare": "picard_compare",
}


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, val = item.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dislocdyn", description="Pseudo-spectral dislocation-density simulator and verification suite.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="INI config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("--output-dir", help="shorthand for --set experiment.output_dir=DIR")
        p.add_argument("--jobs", type=int, help="parallel workers for sweep members")

    common(sub.add_parser("run", help="run the mode named in the config"))
    for name in SUBCOMMAND_MODES:
        common(sub.add_parser(name, help=f"run with mode = {SUBCOMMAND_MODES[name]}"))
    p = sub.add_parser("echo-config", help="print the validated config with all defaults filled in")
    p.add_argument("config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        ov = _overrides(args.overrides)
        if args.command in SUBCOMMAND_MODES:
            ov["experiment.mode"] = SUBCOMMAND_MODES[args.command]
        if getattr(args, "output_dir", None):
            ov["experiment.output_dir"] = args.output_dir
        if getattr(args, "jobs", None):
            ov["experiment.jobs"] = str(args.jobs)
        cfg = parse_config(args.config, ov)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    if args.command == "echo-config":
        sys.stdout.write(dump_config(cfg))
        return 0
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
