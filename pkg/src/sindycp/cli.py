"""Command-line entry point: ``sindycp <command> [--config FILE] ...``.

Exit status is 0 when every threshold check of the scenario passes, 1 when
some check fails and 2 when the run itself fails.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from sindycp.errors import SindyCPError
from sindycp.scenarios import COMMANDS, FULL_REALIZATIONS, config_help, load_config, parse_config, run_scenario

_ABOUT = {
    "simulate": "simulate a system and write clean and noisy time series",
    "forecast": "online EnbPI and CP-PID prediction intervals on a noisy stream",
    "sweep-coverage": "achieved coverage and width over a list of target levels",
    "sweep-importance": "inclusion, LOCO and LOCO-path importance versus data length",
    "sweep-coefficients": "feature-CP versus E-SINDy coefficient intervals over noise levels",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sindycp",
        description="Sparse model discovery with conformal prediction intervals.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(
            name, help=_ABOUT[name], description=_ABOUT[name],
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="config keys (key = value, defaults shown):\n" + config_help(),
        )
        p.add_argument("--config", metavar="FILE",
                       help="config file or a CSV written by an earlier run (default: built-in)")
        p.add_argument("--seed", type=int, metavar="N", help="base seed (default: 0)")
        p.add_argument("--out", metavar="DIR", default=f"out/{name}",
                       help="output directory (default: %(default)s)")
        p.add_argument("--realizations", type=int, metavar="N",
                       help="noise realizations (default: 20)")
        p.add_argument("--full", action="store_true",
                       help=f"use {FULL_REALIZATIONS} realizations")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    realizations = FULL_REALIZATIONS if args.full else args.realizations
    overrides = dict(command=args.command, seed=args.seed, realizations=realizations)
    try:
        if args.config:
            cfg = load_config(args.config, **overrides)
        else:
            cfg = parse_config("", **overrides)
    except (SindyCPError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    start = time.perf_counter()
    try:
        result = run_scenario(cfg, args.out)
    except SindyCPError as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for path in result.files:
        print(f"wrote {os.path.relpath(path)}")
    for c in result.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    print(f"done in {time.perf_counter() - start:.1f} s")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
