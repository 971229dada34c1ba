"""
Command-line entry point for the precoding simulator.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from src.config.loader import ConfigLoader
from src.lib.error.handler import ConfigValidationError, ErrorHandler
from src.lib.logging_utils import configure_logging
from src.services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)

error_handler = ErrorHandler()

COMMANDS = {
    "train": "Train every learned artifact of the sweep (reusing finished checkpoints)",
    "eval": "Evaluate from existing checkpoints only; never trains",
    "sweep": "Train what is missing, evaluate every method and write the CSV",
    "baseline": "Evaluate only the methods that need no training",
    "quantfit": "Fit and export the channel-parameter Lloyd-Max codecs",
}


class CommandParser(argparse.ArgumentParser):
    """Argument parser whose usage errors surface as ConfigValidationError"""

    def error(self, message: str):
        raise ConfigValidationError(
            f"Invalid command line: {message}",
            errors=[{"field": "argv", "message": message}],
        )


def build_parser() -> CommandParser:
    parser = CommandParser(prog="dsc-precoder", description="Limited-feedback FDD precoding simulator")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command, help_text in COMMANDS.items():
        sub = subparsers.add_parser(command, help=help_text)
        sub.add_argument("--config", required=True, help="Experiment file (YAML or JSON)")
        sub.add_argument("--seed", type=int, default=None, help="Root seed overriding the file")
        sub.add_argument("--out", default=None, help="Output directory overriding the file")
        sub.add_argument("--preset", choices=["desk", "paper"], default=None, help="Scale preset")
        sub.add_argument("--workers", type=int, default=None, help="Worker processes for the grid")
        sub.add_argument("--log-level", default=None, help="Logging level (DEBUG, INFO, ...)")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "seed": args.seed,
        "output_dir": args.out,
        "preset": args.preset,
        "workers": args.workers,
        "eval_only": True if args.command == "eval" else None,
    }


def execute(args: argparse.Namespace, service: ExperimentService) -> Dict[str, Any]:
    """Run one subcommand and return its JSON-ready summary"""
    config = service.load_config(args.config, _overrides(args))
    if args.command == "train":
        return {"command": "train", "checkpoints": service.train(config)}
    if args.command == "quantfit":
        return {"command": "quantfit", "codecs": service.fit_quantizers(config)}
    if args.command == "baseline":
        config = service.baselines_only(config)

    summary = service.run(config)
    return {
        "command": args.command,
        "csv": summary.csv_path,
        "manifest": summary.manifest_path,
        "rows": len(summary.rows),
        "config_hash": summary.config_hash,
        "wall_time": summary.wall_time,
    }


def _fail(exc: Exception) -> int:
    print(json.dumps(error_handler.to_payload(exc), default=str), file=sys.stderr)
    return error_handler.exit_code(exc)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigValidationError as e:
        return _fail(e)
    config_loader = ConfigLoader()
    configure_logging(config_loader.get("logging"), level=args.log_level)

    try:
        result = execute(args, ExperimentService(config_loader))
    except Exception as e:
        code = error_handler.exit_code(e)
        if code == ErrorHandler.UNEXPECTED_EXIT:
            logger.error(f"Unexpected failure in '{args.command}'", exc_info=True)
        else:
            logger.error(f"'{args.command}' failed: {e}")
        _fail(e)
        return code

    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
