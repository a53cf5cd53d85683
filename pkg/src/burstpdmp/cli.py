"""Command line entry point ``burstpdmp``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 failed check.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Optional, Sequence

from . import __version__, commands
from .config import load_config
from .errors import BurstPDMPError, ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CHECK = 4

_COMMANDS = {
    "simulate": (commands.cmd_simulate, "simulate the two-dimensional process"),
    "reduce": (commands.cmd_reduce, "simulate the reduced one-dimensional dynamics"),
    "moments": (commands.cmd_moments, "ensemble moments and log-log scaling slopes"),
    "density": (commands.cmd_density, "finite-volume densities and distances to the closed form"),
    "reproduce-fig1": (commands.cmd_reproduce_fig1, "stationary X/Y histograms with the reduced overlay"),
    "reproduce-fig2": (commands.cmd_reproduce_fig2, "distances, Y moments and moment scaling over gamma1"),
}


def _gamma_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty gamma1 list")
    return values


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="burstpdmp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config or a previous run's manifest.json")
    common.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads (default: $BURSTPDMP_THREADS, else CPU count)")
    common.add_argument("--gamma1", type=_gamma_list, help="comma-separated gamma1 values")
    for name, (_, help_text) in _COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)

    sc = sub.add_parser("selfcheck", help="fast invariant checks")
    sc.add_argument("--flow-tol", type=float, default=1e-10, help="tolerance of the flow exactness check")
    return parser


def resolve(args: argparse.Namespace):
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.gamma1 is not None:
        overrides["gamma1_grid"] = args.gamma1
    return dataclasses.replace(cfg, **overrides).validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, matching the config-error code
        return int(exc.code or 0)
    try:
        if args.command == "selfcheck":
            commands.cmd_selfcheck(flow_tol=args.flow_tol)
            print("all checks passed")
            return EXIT_OK
        cfg = resolve(args)
        fn, _ = _COMMANDS[args.command]
        manifest = fn(cfg)
        print(f"wrote {manifest}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BurstPDMPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
