#!/usr/bin/env python3
"""Shared machinery for the prediction-based tests."""

import math
import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from contracts import (
    InsufficientOverlapError,
    NotConvergedError,
    TransformDomainError,
)
from processors.assessment import confidence_level, p1_from_predictive
from processors.core import DailySeries, StationMeta, WeatherVariable
from processors.interfaces import PredictiveDistribution, TestId, TestResult
from processors.solvers import (
    LassoModel,
    lambda_grid,
    lasso_fit,
    lasso_lambda_max,
)
from processors.transform import DEFAULT_TRANSFORMS, TransformKind

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0


@dataclass
class CalibrationSettings:
    """Numerical knobs shared by every calibration"""
    radius_km: float = 200.0
    max_neighbors: int = 20
    min_neighbors: int = 2
    cv_folds: int = 5
    n_lambdas: int = 30
    lambda_ratio: float = 1e-3
    lasso_tol: float = 1e-7
    min_calibration_days: int = 365
    recommended_calibration_days: int = 730
    subdaily_samples: int = 10_000
    min_subdaily_slots: int = 18
    seed: int = 42
    transforms: Dict[WeatherVariable, TransformKind] = field(default_factory=lambda: dict(DEFAULT_TRANSFORMS))

    def transform_kind(self, variable: WeatherVariable) -> TransformKind:
        return self.transforms.get(variable, DEFAULT_TRANSFORMS[variable])


# =============================================================================
# NEIGHBORS
# =============================================================================

def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on a sphere of radius 6371 km."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def select_neighbors(
    target: StationMeta,
    candidates: Sequence[StationMeta],
    radius_km: float = 200.0
) -> List[StationMeta]:
    """
    Official stations within radius_km of the target, nearest first.

    The radius is inclusive; equal distances are ordered by station id.
    """
    scored = []
    for candidate in candidates:
        if candidate.id == target.id or not candidate.is_official:
            continue
        distance = haversine_km(target.latitude, target.longitude, candidate.latitude, candidate.longitude)
        if distance <= radius_km:
            scored.append((distance, candidate.id, candidate))
    scored.sort(key=lambda item: (item[0], item[1]))
    return [candidate for _, _, candidate in scored]


def aligned_frame(
    target: DailySeries,
    predictors: Dict[str, DailySeries],
    min_overlap: int
) -> pd.DataFrame:
    """
    Days on which the target and every kept predictor report.

    Predictors overlapping the target on fewer than min_overlap days are
    dropped first; the target column is named "__target__".
    """
    columns = {"__target__": target.values}
    for station_id in sorted(predictors):
        series = predictors[station_id].values
        overlap = series.index.intersection(target.values.index).size
        if overlap >= min_overlap:
            columns[station_id] = series
        else:
            logger.debug(f"{target.station_id}: dropping predictor {station_id} ({overlap} common days)")
    frame = pd.DataFrame(columns).dropna()
    return frame


def window_of(index: pd.DatetimeIndex) -> Tuple[date, date]:
    return index.min().date(), index.max().date()


# =============================================================================
# CROSS-VALIDATED LASSO
# =============================================================================

@dataclass
class CrossValidatedLasso:
    """Final fit plus the out-of-fold residuals at the chosen penalty"""
    model: LassoModel
    oof_residuals: np.ndarray
    lambdas: np.ndarray
    cv_error: np.ndarray
    cv_se: np.ndarray
    chosen_index: int


def day_numbers(index: pd.DatetimeIndex, start: Optional[date] = None) -> np.ndarray:
    """Whole days from start (default: the first day of index) to each entry."""
    if len(index) == 0:
        return np.zeros(0, dtype=int)
    origin = index[0] if start is None else pd.Timestamp(start)
    return np.asarray((index - origin).days, dtype=int)


def fold_labels(days: np.ndarray, folds: int) -> np.ndarray:
    """Deterministic fold of each row: its day number modulo folds."""
    return np.asarray(days, dtype=int) % folds


def fit_lasso_cv(
    X: np.ndarray,
    y: np.ndarray,
    settings: CalibrationSettings,
    fixed_lambda: Optional[float] = None,
    days: Optional[np.ndarray] = None
) -> CrossValidatedLasso:
    """
    Choose the LASSO penalty by K-fold cross-validation with the 1-SE rule.

    The grid runs from lambda_max down to lambda_ratio * lambda_max on a
    log scale. If coordinate descent stalls at small penalties the grid is
    truncated there.

    Rows are assigned to folds by their day number (see day_numbers), or
    by row position when days is None. Folds left empty by gaps are
    skipped.
    """
    n = y.shape[0]
    labels = fold_labels(np.arange(n) if days is None else days, settings.cv_folds)
    folds = [f for f in range(settings.cv_folds) if np.any(labels == f)]
    if len(folds) < 2:
        labels = fold_labels(np.arange(n), settings.cv_folds)
        folds = list(range(min(settings.cv_folds, n)))
    if fixed_lambda is not None:
        lambdas = np.array([float(fixed_lambda)])
    else:
        lambdas = lambda_grid(lasso_lambda_max(X, y), settings.n_lambdas, settings.lambda_ratio)

    fold_paths = []
    usable = lambdas.size
    for f in folds:
        train = labels != f
        path = _truncating_path(X[train], y[train], lambdas[:usable], settings.lasso_tol)
        usable = min(usable, len(path))
        fold_paths.append(path)
    if usable < lambdas.size:
        logger.warning(f"LASSO path truncated at lambda={lambdas[usable - 1]:.3g} (coordinate descent stalled)")
    lambdas = lambdas[:usable]

    errors = np.zeros((usable, len(folds)))
    oof = np.zeros((usable, n))
    for k, (f, path) in enumerate(zip(folds, fold_paths)):
        test = labels == f
        for i in range(usable):
            prediction = path[i].predict(X[test])
            oof[i, test] = y[test] - prediction
            errors[i, k] = float(np.mean(oof[i, test] ** 2))

    cv_error = errors.mean(axis=1)
    cv_se = errors.std(axis=1, ddof=1) / math.sqrt(len(folds)) if len(folds) > 1 else np.zeros(usable)
    best = int(np.argmin(cv_error))
    limit = cv_error[best] + cv_se[best]
    chosen = int(np.flatnonzero(cv_error <= limit)[0])

    final_path = _truncating_path(X, y, lambdas[:chosen + 1], settings.lasso_tol)
    if len(final_path) <= chosen:
        chosen = len(final_path) - 1
    model = final_path[chosen]
    logger.debug(
        f"LASSO CV: lambda={lambdas[chosen]:.4g} (index {chosen}/{usable}), "
        f"cv_mse={cv_error[chosen]:.4g}, active={int(np.count_nonzero(model.coefficients))}"
    )
    return CrossValidatedLasso(model, oof[chosen].copy(), lambdas, cv_error, cv_se, chosen)


def _truncating_path(X: np.ndarray, y: np.ndarray, lambdas: np.ndarray, tol: float) -> List[LassoModel]:
    models: List[LassoModel] = []
    warm = None
    for lam in lambdas:
        try:
            model = lasso_fit(X, y, float(lam), tol=tol, warm_start=warm)
        except NotConvergedError:
            if not models:
                raise
            break
        warm = model.coefficients * model.predictor_scales
        models.append(model)
    return models


# =============================================================================
# RESULTS
# =============================================================================

def score(
    test_id: TestId,
    obs_value: float,
    dist: PredictiveDistribution,
    cal_mse: float,
    inputs_used: Dict[str, Any],
    median_offset: float = 0.0
) -> TestResult:
    """
    Turn a predictive distribution into a TestResult.

    median_offset shifts the reported median back to value space when the
    distribution describes a change (trend test).
    """
    try:
        p1 = p1_from_predictive(obs_value, dist)
    except TransformDomainError:
        # below the transform support: as extreme as a low value can be
        p1 = 0.0
        inputs_used = dict(inputs_used, transform_domain="observation below transform support")
    return TestResult(
        test_id=test_id,
        applicable=True,
        p1=p1,
        cl=confidence_level(p1),
        predicted_median=dist.median + median_offset,
        predicted_sigma=dist.sigma,
        cal_mse=cal_mse,
        inputs_used=inputs_used,
    )


def require_overlap(frame: pd.DataFrame, min_days: int, what: str) -> None:
    if len(frame) < min_days:
        raise InsufficientOverlapError(
            f"{what}: {len(frame)} common days (< {min_days})",
            context={"days": len(frame), "required": min_days}
        )
