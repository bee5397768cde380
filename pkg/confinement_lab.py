#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
CLI script for the weak-confinement verification lab.

Each subcommand reads an INI configuration, runs one family of experiments,
writes CSV series, JSON fits/estimates, ``verdicts.json`` and
``manifest.json`` into the output directory, and exits with

    0  every verdict passes (or there is none)
    1  some verdict fails
    2  usage or configuration error
    3  numerical failure

Usage:
    python confinement_lab.py macro-decay --config configs/theorem1.ini
    python confinement_lab.py spectrum --config configs/spectrum.ini --set problem.gamma=3.2
    python confinement_lab.py report --out out/
    python confinement_lab.py sweep macro-decay --config configs/sweep.ini
"""

import argparse
import logging
import sys
from pathlib import Path

# Add the parent directory to the path to import weak_confinement
sys.path.insert(0, str(Path(__file__).parent))

from weak_confinement.config import ExperimentConfig, load_config, parse_config
from weak_confinement.errors import ConfigError, DomainError, PreconditionError, SolverError
from weak_confinement.experiments import RUNNERS, run_experiment, run_sweep
from weak_confinement.rates import exit_status

EXIT_USAGE = 2
EXIT_NUMERICAL = 3

LOG_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}


def _print_verdicts(verdicts):
    if not verdicts:
        print("No verdicts.")
        return
    print(f"\n{'criterion':<12} {'pass':<6} {'expected':>14} {'measured':>14}  description")
    for v in verdicts:
        expected = f"{v.expected:.6g}" if isinstance(v.expected, float) else "properties"
        measured = "" if v.measured is None else f"{v.measured:.6g}"
        print(f"{v.theorem_id.value:<12} {str(v.passed):<6} {expected:>14} {measured:>14}  {v.description}")
        for name, ok in sorted(v.checks.items()):
            if not ok:
                print(f"{'':<12} failed check: {name}")


def _load(args) -> ExperimentConfig:
    if args.config is None:
        if args.command != "report":
            raise ConfigError(f"the {args.command} subcommand needs --config")
        cfg = parse_config("", args.set)
    else:
        cfg = load_config(args.config, args.set)
    if args.out is not None:
        cfg = cfg.with_output(args.out)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Numerical verification of decay rates under very weak confinement",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Example configuration file (theorem1.ini):
[problem]
kind = V2
d = 3
gamma = 0.4
theorem = T1

[grid]
n_radial = 400
r_max = 80

[time]
dt = 0.05
t_end = 100

[output]
directory = out/theorem1

Output files:
  trajectory.csv / kinetic.csv / spectrum.csv   time,value,series_name or per-run columns
  fits.json, estimates.json                     fitted exponents and inequality constants
  verdicts.json, manifest.json                  verdicts; config, sha1, version, wall time
        """,
    )
    parser.add_argument(
        "-v", "--verbosity",
        type=int,
        default=0,
        choices=[0, 1, 2],
        help="Verbosity level (0=quiet, 1=normal, 2=verbose)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_common(sub):
        sub.add_argument("--config", type=str, default=None, help="Path to the INI configuration file")
        sub.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                         help="Override a configuration value (repeatable)")
        sub.add_argument("--out", type=str, default=None, help="Output directory (overrides [output] directory)")

    for name in RUNNERS:
        add_common(subparsers.add_parser(name, help=f"run the {name} experiments"))
    sweep = subparsers.add_parser("sweep", help="run a subcommand over the [sweep] product")
    sweep.add_argument("target", choices=[name for name in RUNNERS if name != "report"])
    sweep.add_argument("--processes", type=int, default=None, help="Worker processes (default: all cores)")
    add_common(sweep)
    return parser


def main(argv=None) -> int:
    """Main entry point for the CLI script."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0

    logging.basicConfig(level=LOG_LEVELS[args.verbosity], format="%(asctime)s %(levelname)s %(message)s")

    try:
        cfg = _load(args)
        print(f"Running {args.command} into {cfg.output.directory}")
        if args.command == "sweep":
            verdicts = run_sweep(args.target, cfg, processes=args.processes)
        else:
            verdicts = run_experiment(args.command, cfg)
    except (ConfigError, DomainError, PreconditionError) as e:
        print(f"Error: {e}")
        return EXIT_USAGE
    except SolverError as e:
        print(f"Numerical failure: {e}")
        return EXIT_NUMERICAL

    _print_verdicts(verdicts)
    status = exit_status(verdicts)
    print("\nDone!" if status == 0 else "\nSome verdicts failed.")
    return status


if __name__ == "__main__":
    sys.exit(main())
