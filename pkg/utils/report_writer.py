#!/usr/bin/env python3
"""
Report Writer - assessment reports and per-run processing logs

Assessment reports are canonical JSON (sorted keys, %.17g floats, records
ordered by station, date and test) so identical inputs give identical
bytes. The same report renders as an aligned text traceback.

Run logs are human-readable summaries of one calibrate/assess run:
- Run parameters
- Stations processed
- Per-test outcome counts
- Issues and warnings (calibration failures, exclusions)
- Final status
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from contracts import ParseError
from processors.assessment import DEFAULT_CL_THRESHOLD, Assessment, traceback
from utils import canonical_json

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
REPORT_FORMATS = ("text", "json")


# =============================================================================
# ASSESSMENT REPORTS
# =============================================================================

def assessment_record(assessment: Assessment, cl_threshold: float = DEFAULT_CL_THRESHOLD) -> Dict[str, Any]:
    """One observation: its traceback plus every attempted test's result."""
    record = traceback(assessment).to_dict()
    record["flagged"] = assessment.flagged(cl_threshold)
    record["fused_p1"] = "NA" if assessment.fused_p1 is None else assessment.fused_p1
    record["domain"] = None if assessment.domain_verdict is None else {
        "passed": assessment.domain_verdict.passed,
        "reason": assessment.domain_verdict.reason,
    }
    record["results"] = [
        assessment.results[tid].to_dict() for tid in sorted(assessment.results, key=lambda t: t.sort_key)
    ]
    return record


def build_assessment_report(
    assessments: Sequence[Assessment],
    cl_threshold: float = DEFAULT_CL_THRESHOLD,
    variable: Optional[str] = None
) -> Dict[str, Any]:
    ordered = sorted(assessments, key=lambda a: (a.observation.station_id, a.observation.date))
    records = [assessment_record(a, cl_threshold) for a in ordered]
    return {
        "report_version": REPORT_VERSION,
        "variable": variable or (ordered[0].observation.variable.value if ordered else None),
        "cl_threshold": cl_threshold,
        "n_assessments": len(records),
        "n_flagged": sum(r["flagged"] for r in records),
        "n_na": sum(r["final_cl"] == "NA" for r in records),
        "assessments": records,
    }


def write_assessment_report(path: Path, report: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json.dumps(report), encoding='utf-8')
    logger.info(f"Wrote assessment report ({report['n_assessments']} observations) to {path}")
    return path


def load_assessment_report(path: Path) -> Dict[str, Any]:
    """
    Raises:
        ParseError: Missing file, invalid JSON or unknown report version
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"Assessment report not found: {path}", context={"path": str(path)})
    try:
        report = canonical_json.loads(path.read_text(encoding='utf-8'))
    except ValueError as e:
        raise ParseError(f"{path}: not valid JSON: {e}", context={"path": str(path)}) from e
    if not isinstance(report, dict) or report.get("report_version") != REPORT_VERSION:
        raise ParseError(f"{path}: not an assessment report (version {REPORT_VERSION})", context={"path": str(path)})
    return report


def _fmt(value: Any, digits: int = 4) -> str:
    if value is None or value == "NA":
        return "NA"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def render_text(report: Dict[str, Any]) -> str:
    """Aligned traceback per observation, contributing tests lowest CL first."""
    lines = [
        f"Assessment report: {report.get('variable')}, CL threshold {report.get('cl_threshold')}",
        f"{report['n_assessments']} observations, {report['n_flagged']} flagged, {report['n_na']} NA",
        "",
    ]
    for record in report["assessments"]:
        mark = "SUSPECT" if record["flagged"] else "ok"
        lines.append(
            f"{record['station_id']} {record['date']} {record['variable']} = {_fmt(record['value'], 2)}"
            f"  final CL {_fmt(record['final_cl'])}  [{mark}]"
        )
        domain = record.get("domain")
        if domain is not None and not domain["passed"]:
            lines.append(f"  domain test failed: {domain['reason']}")
        if record["contributing"]:
            lines.append(f"  {'test':<22}{'weight':>8}{'CL':>10}{'median':>10}")
            for entry in record["contributing"]:
                lines.append(
                    f"  {entry['test_id']:<22}{_fmt(entry['weight'], 3):>8}{_fmt(entry['cl']):>10}"
                    f"{_fmt(entry['predicted_median'], 2):>10}"
                )
        for excluded in record["excluded"]:
            lines.append(f"  - {excluded['test_id']}: {excluded['reason']}")
        lines.append("")
    return "\n".join(lines)


def render_report(report: Dict[str, Any], fmt: str = "text") -> str:
    if fmt == "json":
        return canonical_json.dumps(report)
    if fmt == "text":
        return render_text(report)
    raise ValueError(f"Unknown report format {fmt!r}, expected one of {REPORT_FORMATS}")


# =============================================================================
# RUN LOG
# =============================================================================

def generate_run_log(
    output_dir: Path,
    run_name: str,
    summary: Dict[str, Any]
) -> Path:
    """
    Generate a processing log for one run.

    Args:
        output_dir: Directory for the log
        run_name: Run name; the log is <run_name>_run.log
        summary: Run summary with keys: command, variable, parameters,
            stations, tests (name -> {calibrated, applicable, ...}),
            issues, warnings, status

    Returns:
        Path to the generated log file
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    log_path = output_dir / f"{run_name}_run.log"

    lines: List[str] = []
    lines.append("=" * 80)
    lines.append("QUALITY CONTROL RUN LOG")
    lines.append("=" * 80)
    lines.append(f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    lines.append(f"Run: {run_name}")
    lines.append(f"Status: {summary.get('status', 'UNKNOWN')}")
    lines.append("")

    lines.append("RUN")
    lines.append("-" * 40)
    lines.append(f"  Command: {summary.get('command', 'unknown')}")
    lines.append(f"  Variable: {summary.get('variable', 'unknown')}")
    for key, value in sorted(summary.get("parameters", {}).items()):
        lines.append(f"  {key.replace('_', ' ').title()}: {value}")
    lines.append("")

    stations = summary.get("stations", [])
    lines.append("STATIONS")
    lines.append("-" * 40)
    lines.append(f"  Processed: {len(stations)}")
    for station in stations[:20]:
        lines.append(f"    • {station}")
    if len(stations) > 20:
        lines.append(f"    ... and {len(stations) - 20} more")
    lines.append("")

    tests = summary.get("tests", {})
    if tests:
        lines.append("TESTS")
        lines.append("-" * 40)
        for name, counts in tests.items():
            detail = ", ".join(f"{k} {v:,}" for k, v in sorted(counts.items()))
            lines.append(f"  {name}: {detail}")
        lines.append("")

    issues = summary.get("issues", [])
    warnings = summary.get("warnings", [])
    if issues or warnings:
        lines.append("ISSUES & WARNINGS")
        lines.append("-" * 40)
        if issues:
            lines.append("  Issues:")
            for issue in issues[:50]:
                lines.append(f"    • {issue}")
            if len(issues) > 50:
                lines.append(f"    ... and {len(issues) - 50} more")
        if warnings:
            lines.append("  Warnings:")
            for warning in warnings[:50]:
                lines.append(f"    • {warning}")
            if len(warnings) > 50:
                lines.append(f"    ... and {len(warnings) - 50} more")
        lines.append("")

    lines.append("SUMMARY")
    lines.append("-" * 40)
    status = summary.get("status", "UNKNOWN")
    if status == "SUCCESS":
        lines.append("  ✓ Run completed successfully")
    elif status == "PARTIAL":
        lines.append("  ⚠ Run completed with issues (see above)")
    elif status == "FAILED":
        lines.append("  ✗ Run failed")
    else:
        lines.append(f"  Status: {status}")
    lines.append("")
    lines.append("=" * 80)
    lines.append("End of log")
    lines.append("=" * 80)

    log_path.write_text("\n".join(lines), encoding='utf-8')
    return log_path
