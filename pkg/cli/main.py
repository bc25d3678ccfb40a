#!/usr/bin/env python3
"""
tpaws-qc - command-line entry point

Subcommands:
    fetch       Fetch and merge input files from a local tree or a mirror
    calibrate   Calibrate every enabled test for the TPAWS stations
    assess      Assess one day's observations and write a report
    inject      Contaminate TPAWS observations with synthetic errors
    evaluate    Hit and false-alarm rates of an assessment against labels
    report      Render an assessment report as text or JSON
    experiment  Run the synthetic network experiment end to end

Exit codes: 0 success, 1 usage error, 2 data error. Errors go to stderr
as `ERROR <code>: <message>`.
"""

import sys
import argparse
import logging
from datetime import date
from pathlib import Path
from typing import List, Optional

from contracts import QualityControlError, UsageError
from utils.environment_config import get_or_create_env_config
from utils.run_config import RunConfig, load_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class QcArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad usage"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}", context={"usage": self.format_usage()})


def iso_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a YYYY-MM-DD date: {text!r}")


def add_config_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        '--config',
        type=Path,
        help='Run configuration file (default: $TPAWS_CONFIG)'
    )


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """
    Load --config, falling back to TPAWS_CONFIG.

    Raises:
        UsageError: Neither is given
        ConfigError: The configuration is invalid
    """
    path = args.config or get_or_create_env_config().config_path
    if path is None:
        raise UsageError("--config is required (or set TPAWS_CONFIG)")
    config = load_run_config(path)
    variable = getattr(args, 'variable', None)
    if variable is not None and variable != config.variable:
        config = config.model_copy(update={"variable": variable})
    return config


def output_dir_for(config: RunConfig) -> Path:
    return config.output_dir or get_or_create_env_config().output_dir


def log_dir_for(config: RunConfig) -> Path:
    return config.log_dir or get_or_create_env_config().log_dir


def build_parser() -> QcArgumentParser:
    from cli import assess, calibrate, evaluate, experiment, fetch, inject, report

    parser = QcArgumentParser(
        prog='tpaws-qc',
        description='Quality assessment of third-party weather station observations'
    )
    parser.add_argument('--verbose', action='store_true', help='Show debug messages on the console')
    subparsers = parser.add_subparsers(dest='command', parser_class=QcArgumentParser)
    subparsers.required = True

    for module in (fetch, calibrate, assess, inject, evaluate, report, experiment):
        sub = subparsers.add_parser(module.COMMAND, help=module.HELP, description=module.HELP)
        module.add_arguments(sub)
        sub.set_defaults(handler=module.run)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"ERROR {e.error_code}: {e.message}", file=sys.stderr)
        print(e.context.get("usage", parser.format_usage()).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    try:
        return args.handler(args)
    except UsageError as e:
        print(f"ERROR {e.error_code}: {e.message}", file=sys.stderr)
        return EXIT_USAGE
    except QualityControlError as e:
        logger.debug(f"{e.error_code}: {e.context}")
        print(f"ERROR {e.error_code}: {e.message}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
