#!/usr/bin/env python3
"""
Quality Control Standards - Shared Enumerations and Exceptions

Defines the vocabulary shared by every stage of the assessment pipeline:
test identifiers, official data products, station sources, and the
exception hierarchy every stage raises.
"""

from enum import Enum
from typing import Any, Dict, Optional


# =============================================================================
# ENUMERATIONS
# =============================================================================

class StationSource(str, Enum):
    """Who operates a station"""
    OFFICIAL = "Official"
    TPAWS = "TPAWS"


class GridProductKind(str, Enum):
    """Gridded official data products (declaration order is report order)"""
    NWP = "NWP"
    AGCD = "AGCD"
    ERA = "ERA"
    RADAR = "Radar"


class TestKind(str, Enum):
    """Individual tests of the framework (declaration order is the tie order)"""
    DOMAIN = "Domain"
    SPATIAL = "Spatial"
    SPATIOTEMPORAL = "SpatioTemporal"
    TREND = "Trend"
    GRIDDED = "Gridded"
    SUBDAILY = "Subdaily"

    # keep pytest from collecting this enum
    __test__ = False


class InjectionSign(str, Enum):
    """Direction of synthetic errors"""
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    BOTH = "Both"


# =============================================================================
# EXCEPTIONS
# =============================================================================

class QualityControlError(Exception):
    """
    Base exception for all quality control errors.

    Every error carries a stable machine-readable code so the CLI can
    report it as ``ERROR <code>: <message>``.
    """

    default_code = "QC_ERROR"

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
        recoverable: bool = False
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or self.default_code
        self.context = context or {}
        self.recoverable = recoverable

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization"""
        return {
            "error_type": self.__class__.__name__,
            "message": self.message,
            "error_code": self.error_code,
            "context": self.context,
            "recoverable": self.recoverable
        }


class IncompatibleUnitsError(QualityControlError):
    """Units cannot be converted into each other"""
    default_code = "INCOMPATIBLE_UNITS"


class TransformDomainError(QualityControlError):
    """Value lies outside the support of a transformation"""
    default_code = "TRANSFORM_DOMAIN"


class FitDegenerateError(QualityControlError):
    """Samples carry no information for a fit (e.g. constant)"""
    default_code = "FIT_DEGENERATE"


class NotConvergedError(QualityControlError):
    """Iterative solver hit its iteration limit"""
    default_code = "NOT_CONVERGED"


class TooFewSamplesError(QualityControlError):
    """Not enough samples for an estimator"""
    default_code = "TOO_FEW_SAMPLES"


class NumericalBreakdownError(QualityControlError):
    """Matrix that must be inverted is singular or not positive definite"""
    default_code = "NUMERICAL_BREAKDOWN"


class DegenerateError(QualityControlError):
    """Ensemble input cannot support a mixture fit"""
    default_code = "DEGENERATE"


class InsufficientOverlapError(QualityControlError):
    """Too few common days between target and predictors"""
    default_code = "INSUFFICIENT_OVERLAP"


class NoNeighborsError(QualityControlError):
    """Fewer official neighbors than a test requires"""
    default_code = "NO_NEIGHBORS"


class NotApplicableError(QualityControlError):
    """A test's preconditions do not hold for this observation"""
    default_code = "NOT_APPLICABLE"

    def __init__(self, message: str, **kwargs: Any):
        kwargs.setdefault("recoverable", True)
        super().__init__(message, **kwargs)


class ProductVariableMismatchError(QualityControlError):
    """Gridded product is not an official source for the variable"""
    default_code = "PRODUCT_VARIABLE_MISMATCH"


class OutOfBoundsError(QualityControlError):
    """Site lies outside a grid's bounding box"""
    default_code = "OUT_OF_BOUNDS"


class InsufficientHistoryError(QualityControlError):
    """Too few days of sub-daily history"""
    default_code = "INSUFFICIENT_HISTORY"


class OutOfRangeError(QualityControlError):
    """Probability outside [0, 1]"""
    default_code = "OUT_OF_RANGE"


class NoCandidatesError(QualityControlError):
    """No candidate station qualifies for screening"""
    default_code = "NO_CANDIDATES"


class CovarianceNotPDError(QualityControlError):
    """Station covariance could not be factorized"""
    default_code = "COVARIANCE_NOT_PD"


class MisalignedError(QualityControlError):
    """Assessments and truth labels do not cover the same keys"""
    default_code = "MISALIGNED"


class ParseError(QualityControlError):
    """Input file failed validation; message lists every bad line"""
    default_code = "PARSE_ERROR"


class NotCalibratedError(QualityControlError):
    """No stored model for a (station, variable, test)"""
    default_code = "NOT_CALIBRATED"


class VersionError(QualityControlError):
    """Stored record has an unsupported schema version"""
    default_code = "VERSION_MISMATCH"


class ConfigError(QualityControlError):
    """Run configuration is invalid"""
    default_code = "CONFIG_ERROR"


class UsageError(QualityControlError):
    """Command line usage error"""
    default_code = "USAGE"
