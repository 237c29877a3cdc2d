"""
DAMC - Distributionally aware matrix completion
Command-line entry point: synthetic grids, bounds, single fits, real data
"""

import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from config import DamcConfig, LOG_LEVELS, load_run_config
from core.errors import ArgumentError, ConfigurationError, DamcError
from handlers.commands import CommandHandlers

# Load environment variables
load_dotenv()

logger = logging.getLogger("damc")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per command"""
    parser = argparse.ArgumentParser(
        prog="damc", description="Semi-supervised matrix completion with a shared sampling subspace"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_common(sub: argparse.ArgumentParser, config_required: bool) -> None:
        sub.add_argument("--config", required=config_required, help="JSON run config")
        sub.add_argument("--out", help="output directory (default DAMC_OUTPUT_DIR)")
        sub.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config value by dotted path (repeatable)",
        )
        sub.add_argument("--log-level", choices=LOG_LEVELS, type=str.upper, help="overrides DAMC_LOG")

    grid = subparsers.add_parser("synth-grid", help="run the synthetic (M, N) grid")
    add_common(grid, config_required=True)
    grid.add_argument("--jobs", type=int, help="parallel worker processes (default DAMC_JOBS)")

    add_common(subparsers.add_parser("bounds", help="evaluate assumption constants and bounds"), True)
    add_common(subparsers.add_parser("fit", help="fit one synthetic instance"), True)
    add_common(subparsers.add_parser("real", help="label-removal comparison on rating data"), True)

    replay = subparsers.add_parser("replay", help="re-evaluate a serialized world")
    add_common(replay, config_required=False)
    replay.add_argument("--world", required=True, help="world JSON written by the fit command")

    return parser


def _fatal(message: str) -> None:
    logger.error("=" * 60)
    logger.error(f"FATAL ERROR: {message}")
    logger.error("=" * 60)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main function of the CLI
    Parses arguments, dispatches to a command handler and maps errors to exit codes
    """
    args = build_parser().parse_args(argv)

    try:
        config = DamcConfig()
    except ValueError as e:
        logging.basicConfig(format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        _fatal(f"invalid environment: {e}")
        return EXIT_USAGE

    # Configure logging
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=getattr(logging, args.log_level or config.log_level),
    )

    try:
        if args.command == "synth-grid" and args.jobs is not None and args.jobs < 1:
            raise ArgumentError("--jobs must be at least 1")

        run_config = load_run_config(args.config, args.overrides)
        logger.info(f"Running {args.command}")

        handlers = CommandHandlers(config=config)
        if args.command == "synth-grid":
            return handlers.synth_grid_command(run_config, args.out, args.jobs)
        if args.command == "bounds":
            return handlers.bounds_command(run_config, args.out)
        if args.command == "fit":
            return handlers.fit_command(run_config, args.out)
        if args.command == "real":
            return handlers.real_command(run_config, args.out)
        return handlers.replay_command(args.world, run_config, args.out)

    except (ConfigurationError, ArgumentError, ValidationError, FileNotFoundError) as e:
        _fatal(str(e))
        return EXIT_USAGE
    except DamcError as e:
        _fatal(str(e))
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("Unexpected failure")
        _fatal(str(e))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
