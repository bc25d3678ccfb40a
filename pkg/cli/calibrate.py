#!/usr/bin/env python3
"""
CLI for Calibration

Calibrate every enabled test for every TPAWS station over a date window
and save the models to the model store.
"""

import sys
import argparse
import logging

from cli.main import EXIT_OK, add_config_argument, iso_date, log_dir_for, output_dir_for, resolve_config
from contracts import UsageError
from processors.core import WeatherVariable
from processors.pipeline import AssessmentEngine
from utils.data_readers import load_network
from utils.environment_config import get_or_create_env_config
from utils.model_store import ModelStore
from utils.report_writer import generate_run_log
from utils.run_config import setup_logging

logger = logging.getLogger(__name__)

COMMAND = 'calibrate'
HELP = 'Calibrate the enabled tests for TPAWS stations and store the models'


def add_arguments(parser: argparse.ArgumentParser) -> None:
    add_config_argument(parser)
    parser.add_argument('--from', dest='start', type=iso_date, required=True, help='First calibration day')
    parser.add_argument('--to', dest='end', type=iso_date, required=True, help='Last calibration day')
    parser.add_argument('--station', action='append', help='Only this TPAWS station (repeatable)')
    parser.add_argument('--variable', type=WeatherVariable, help='Override the configured variable')
    parser.add_argument('--progress', action='store_true', help='Show a progress bar')


def run(args: argparse.Namespace) -> int:
    if args.end < args.start:
        raise UsageError(f"--to {args.end} is before --from {args.start}")
    config = resolve_config(args)
    run_name = f"calibrate_{config.variable.value}_{args.start}_{args.end}"
    run_logger = setup_logging(log_dir_for(config), run_name, getattr(args, 'verbose', False))

    network = load_network(config)
    engine = AssessmentEngine(
        config.to_settings(),
        config.enabled_tests,
        max_workers=config.max_workers,
        show_progress=args.progress,
    )
    calibration = engine.calibrate(network, window=(args.start, args.end), station_ids=args.station)

    store = ModelStore(config.model_store or get_or_create_env_config().model_store)
    paths = store.save_all(config.variable, calibration.models)

    tests = {}
    for test_id in engine.tests:
        calibrated = sum(test_id in models for models in calibration.models.values())
        failed = sum(tid == test_id for _, tid, _ in calibration.failures)
        tests[str(test_id)] = {"calibrated": calibrated, "failed": failed}
    log_path = generate_run_log(output_dir_for(config), run_name, {
        "command": COMMAND,
        "variable": config.variable.value,
        "parameters": {
            "window": f"{args.start}..{args.end}",
            "model_store": store.root,
            "radius_km": config.radius_km,
            "seed": config.seed,
        },
        "stations": sorted(calibration.models),
        "tests": tests,
        "warnings": [f"{sid} {tid}: {reason}" for sid, tid, reason in calibration.failures],
        "status": "SUCCESS" if not calibration.failures else "PARTIAL",
    })

    run_logger.info(f"Saved {len(paths)} models to {store.root}; run log {log_path}")
    print(f"Calibrated {len(paths)} models for {len(calibration.models)} stations "
          f"({len(calibration.failures)} not calibrated)")
    return EXIT_OK


if __name__ == "__main__":
    from cli.main import main
    sys.exit(main([COMMAND] + sys.argv[1:]))
