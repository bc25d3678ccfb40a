"""
Quality Assessment Engine - Processors Module

Each processor covers one stage: domain types and limits, transforms,
numerical solvers, the quality tests, fusion, the network pipeline,
synthetic networks and skill evaluation.
"""

__all__ = [
    'core',
    'transform',
    'solvers',
    'interfaces',
    'quality_tests',
    'assessment',
    'pipeline',
    'synthetic_network',
    'skill_evaluation',
]
