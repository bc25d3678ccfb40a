#!/usr/bin/env python3
"""
CLI for the Synthetic Experiment

Synthesize a network, calibrate on the first half of the years, inject
errors into the second half, assess it and print hit / false-alarm rates
by value band for each test and the merged verdict.
"""

import sys
import argparse
import logging
from pathlib import Path

from cli.main import EXIT_OK
from contracts import UsageError
from processors.core import WeatherVariable
from processors.interfaces import TestId
from processors.quality_tests import DEFAULT_TESTS
from processors.skill_evaluation import run_experiment
from processors.synthetic_network import InjectionSpec, SyntheticConfig
from utils import canonical_json
from utils.run_config import setup_logging

logger = logging.getLogger(__name__)

COMMAND = 'experiment'
HELP = 'Run the synthetic network experiment (wind gust by default)'


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int, default=42, help='Network seed (default: 42)')
    parser.add_argument('--injection-seed', type=int, default=7, help='Injection seed (default: 7)')
    parser.add_argument('--stations', type=int, default=100, help='Number of stations (default: 100)')
    parser.add_argument('--tpaws', type=int, default=10, help='How many of them are TPAWS (default: 10)')
    parser.add_argument('--years', type=int, default=4, help='Years simulated (default: 4)')
    parser.add_argument('--variable', type=WeatherVariable, default=WeatherVariable.WIND_GUST)
    parser.add_argument('--fraction', type=float, default=0.10, help='Contaminated fraction (default: 0.10)')
    parser.add_argument('--low', type=float, default=18.0, help='Smallest error, canonical unit (default: 18)')
    parser.add_argument('--high', type=float, default=52.56, help='Largest error, canonical unit (default: 52.56)')
    parser.add_argument('--threshold', type=float, default=0.05, help='CL threshold (default: 0.05)')
    parser.add_argument('--tests', help='Comma-separated tests, e.g. "Spatial,Gridded(ERA)"')
    parser.add_argument('--workers', type=int, default=1, help='Station worker threads (default: 1)')
    parser.add_argument('--output', type=Path, help='Write the report as JSON')
    parser.add_argument('--log-dir', type=Path, help='Also log to <log-dir>/experiment.log')
    parser.add_argument('--progress', action='store_true', help='Show progress bars')


def run(args: argparse.Namespace) -> int:
    setup_logging(args.log_dir, "experiment", getattr(args, 'verbose', False))
    try:
        config = SyntheticConfig(
            n_stations=args.stations,
            n_tpaws=args.tpaws,
            years=args.years,
            variable=args.variable,
            seed=args.seed,
        )
        injection = InjectionSpec(args.fraction, args.low, args.high, seed=args.injection_seed)
        test_ids = [TestId.parse(t) for t in args.tests.split(",")] if args.tests else list(DEFAULT_TESTS)
    except ValueError as e:
        raise UsageError(str(e))

    report = run_experiment(
        config,
        injection,
        cl_threshold=args.threshold,
        test_ids=test_ids,
        max_workers=args.workers,
        show_progress=args.progress,
    )
    print(report.format_table())
    if args.output is not None:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_text(canonical_json.dumps(report.to_dict()), encoding='utf-8')
        print(f"Report written to {args.output}")
    return EXIT_OK


if __name__ == "__main__":
    from cli.main import main
    sys.exit(main([COMMAND] + sys.argv[1:]))
