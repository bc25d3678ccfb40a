"""
Quality Control Contracts

Shared enumerations and the exception hierarchy used by every stage.
"""

from .qc_standards import (
    # Enumerations
    StationSource,
    GridProductKind,
    TestKind,
    InjectionSign,

    # Exceptions
    QualityControlError,
    IncompatibleUnitsError,
    TransformDomainError,
    FitDegenerateError,
    NotConvergedError,
    TooFewSamplesError,
    NumericalBreakdownError,
    DegenerateError,
    InsufficientOverlapError,
    NoNeighborsError,
    NotApplicableError,
    ProductVariableMismatchError,
    OutOfBoundsError,
    InsufficientHistoryError,
    OutOfRangeError,
    NoCandidatesError,
    CovarianceNotPDError,
    MisalignedError,
    ParseError,
    NotCalibratedError,
    VersionError,
    ConfigError,
    UsageError,
)

__all__ = [
    # Enumerations
    "StationSource",
    "GridProductKind",
    "TestKind",
    "InjectionSign",

    # Exceptions
    "QualityControlError",
    "IncompatibleUnitsError",
    "TransformDomainError",
    "FitDegenerateError",
    "NotConvergedError",
    "TooFewSamplesError",
    "NumericalBreakdownError",
    "DegenerateError",
    "InsufficientOverlapError",
    "NoNeighborsError",
    "NotApplicableError",
    "ProductVariableMismatchError",
    "OutOfBoundsError",
    "InsufficientHistoryError",
    "OutOfRangeError",
    "NoCandidatesError",
    "CovarianceNotPDError",
    "MisalignedError",
    "ParseError",
    "NotCalibratedError",
    "VersionError",
    "ConfigError",
    "UsageError",
]
