"""
Prefect Workflows for TPAWS Quality Control

Provides orchestration of the daily assessment with:
- Parallel per-station assessment
- Report writing and a summary artifact
"""

from .assessment_flow import daily_assessment_flow

__all__ = ["daily_assessment_flow"]
