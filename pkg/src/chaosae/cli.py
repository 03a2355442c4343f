"""Command-line entry point.

Subcommands: simulate, train, sweep, lle, report. Common flags select the
config file, output directory, seed, and scale preset. Exit codes: 0
success, 1 validation error, 2 numerical failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .errors import (
    InvalidInputError,
    NumericalBlowupError,
    TrainingDivergedError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaosae",
        description="Sparse-autoencoder analysis of chaotic time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (// comments allowed)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed for integration and training")
        p.add_argument("--scale", choices=("paper", "desk"), help="preset to apply")

    common(sub.add_parser("simulate", help="integrate the configured system to CSV"))
    common(sub.add_parser("train", help="train one autoencoder, save model + losses"))
    p_sweep = sub.add_parser("sweep", help="train across the alpha or window grid")
    common(p_sweep)
    p_sweep.add_argument("--mode", choices=("alpha", "window"), required=True)
    p_lle = sub.add_parser("lle", help="estimate largest Lyapunov exponents")
    common(p_lle)
    p_lle.add_argument("--mode", choices=("input", "reconstructed"), required=True)
    p_lle.add_argument(
        "--grid",
        choices=("alpha", "window"),
        default="alpha",
        help="which sweep's models feed reconstructed mode",
    )
    common(sub.add_parser("report", help="consolidate artifacts into report.json"))
    return parser


def _config_from_args(args) -> harness.ExperimentConfig:
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.seed is not None:
        overrides["integration.seed"] = args.seed
        overrides["train.seed"] = args.seed
    if args.scale is not None:
        overrides["scale"] = args.scale
    return harness.load_config(args.config, overrides=overrides)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage problems are validation errors under our contract
        return 1 if exc.code not in (0, None) else 0
    try:
        cfg = _config_from_args(args)
        if args.command == "simulate":
            path = harness.cli_simulate(cfg)
        elif args.command == "train":
            path = harness.cli_train(cfg)
        elif args.command == "sweep":
            path = harness.cli_sweep(cfg, args.mode)
        elif args.command == "lle":
            path = harness.cli_lle(cfg, args.mode, args.grid)
        else:
            path = harness.cli_report(cfg)
        print(path)
        return 0
    except (NumericalBlowupError, TrainingDivergedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
