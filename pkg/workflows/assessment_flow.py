#!/usr/bin/env python3
"""
Prefect-Based Daily Assessment Workflow

Runs the next-day quality assessment of a TPAWS network as a Prefect flow:
- Load and validate the run configuration and inputs
- Load each station's calibrated models
- Assess stations in parallel (fan-out)
- Write the assessment report and a summary artifact

Scheduling (e.g. every morning for the previous day) is left to the
Prefect deployment.
"""

import logging
from datetime import date, timedelta
from pathlib import Path
from typing import Any, Dict, List, Optional

from prefect import flow, get_run_logger, task
from prefect.artifacts import create_markdown_artifact
from prefect.cache_policies import NONE
from prefect.task_runners import ThreadPoolTaskRunner

from contracts import ConfigError
from processors.assessment import Assessment
from processors.pipeline import AssessmentEngine, NetworkData
from utils.data_readers import load_network
from utils.environment_config import get_or_create_env_config
from utils.model_store import ModelStore
from utils.report_writer import build_assessment_report, write_assessment_report
from utils.run_config import RunConfig, load_run_config

logger = logging.getLogger(__name__)


# =============================================================================
# PREFECT TASKS
# =============================================================================

@task(name="Load Network", retries=0, cache_policy=NONE, tags=["io"])
def load_inputs(config: RunConfig) -> NetworkData:
    run_logger = get_run_logger()
    network = load_network(config)
    run_logger.info(f"Loaded {len(network.stations)} stations, {len(network.tpaws)} TPAWS series")
    return network


@task(name="Assess Station", retries=1, cache_policy=NONE, tags=["assessment", "parallel"])
def assess_station(
    engine: AssessmentEngine,
    store: ModelStore,
    network: NetworkData,
    config: RunConfig,
    station_id: str,
    day: date
) -> List[Assessment]:
    """
    Assess one station-day with its stored models.

    Tests without a stored model are reported as not applicable.
    """
    run_logger = get_run_logger()
    models, missing = store.load_station(station_id, config.variable, list(engine.tests))
    for test_id, reason in missing:
        run_logger.warning(f"{station_id}: {test_id} not calibrated ({reason})")
    assessment = engine.assess_day(network, models, station_id, day)
    return [] if assessment is None else [assessment]


@task(name="Write Report", retries=0, cache_policy=NONE, tags=["io"])
def write_report(assessments: List[Assessment], config: RunConfig, day: date, output_dir: Path) -> Path:
    report = build_assessment_report(assessments, config.cl_threshold, config.variable.value)
    path = write_assessment_report(output_dir / f"assessment_{config.variable.value}_{day}.json", report)

    rows = "\n".join(
        f"| {r['station_id']} | {r['value']:.2f} | {r['final_cl']} | {'yes' if r['flagged'] else 'no'} |"
        for r in report["assessments"]
    )
    create_markdown_artifact(
        key=f"assessment-{config.variable.value.lower()}-{day}",
        markdown=(
            f"# {config.variable.value} assessment {day}\n\n"
            f"{report['n_assessments']} observations, {report['n_flagged']} flagged, {report['n_na']} NA\n\n"
            f"| Station | Value | Final CL | Flagged |\n|---|---|---|---|\n{rows}\n"
        ),
        description="Daily TPAWS quality assessment",
    )
    return path


# =============================================================================
# MAIN WORKFLOW
# =============================================================================

@flow(
    name="Daily TPAWS Assessment",
    description="Assess one day of TPAWS observations against official data",
    task_runner=ThreadPoolTaskRunner(max_workers=4),
    log_prints=True
)
def daily_assessment_flow(
    config_path: Optional[str] = None,
    day: Optional[date] = None,
    station_ids: Optional[List[str]] = None
) -> Dict[str, Any]:
    """
    Assess one day (default: yesterday) for every TPAWS station.

    Args:
        config_path: Run configuration (default: TPAWS_CONFIG)
        day: Day to assess
        station_ids: Restrict to these TPAWS stations

    Returns:
        Summary with the report path and counts

    Raises:
        ConfigError: No configuration given
        UsageError: A requested station has no TPAWS observations
    """
    run_logger = get_run_logger()
    env = get_or_create_env_config()
    path = Path(config_path) if config_path else env.config_path
    if path is None:
        raise ConfigError("No run configuration given and TPAWS_CONFIG is not set")
    config = load_run_config(path)
    day = day or date.today() - timedelta(days=1)

    run_logger.info(f"{'='*60}")
    run_logger.info(f"Starting daily assessment: {config.variable.value} {day}")
    run_logger.info(f"{'='*60}")

    network = load_inputs(config)
    engine = AssessmentEngine(config.to_settings(), config.enabled_tests)
    store = ModelStore(config.model_store or env.model_store)
    ids = network.select_tpaws(station_ids)

    # Fan-out over stations
    futures = [assess_station.submit(engine, store, network, config, sid, day) for sid in ids]
    assessments = [a for future in futures for a in future.result()]

    report_path = write_report(assessments, config, day, config.output_dir or env.output_dir)
    flagged = sum(a.flagged(config.cl_threshold) for a in assessments)
    run_logger.info(f"✓ Assessed {len(assessments)} observations, {flagged} flagged -> {report_path}")
    return {"report": str(report_path), "assessed": len(assessments), "flagged": flagged, "date": day.isoformat()}


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description='Prefect-based daily assessment workflow')
    parser.add_argument('--config', help='Run configuration (default: $TPAWS_CONFIG)')
    parser.add_argument('--date', type=date.fromisoformat, help='Day to assess (default: yesterday)')
    parser.add_argument('--station', action='append', help='Only this TPAWS station (repeatable)')
    args = parser.parse_args()

    print(daily_assessment_flow(args.config, args.date, args.station))
