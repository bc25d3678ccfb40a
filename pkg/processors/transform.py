#!/usr/bin/env python3
"""
Log-sinh Variance-Stabilizing Transformation

    z = (1/b) * ln(sinh(a + b * (y - y_shift)))

behaves like a log transform for small arguments and like the identity
for large ones, which suits skewed non-negative variables (rainfall,
wind gusts). Parameters are fitted by maximum likelihood assuming the
transformed samples are Gaussian.
"""

import math
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Union

import numpy as np
from scipy.optimize import minimize

from contracts import TransformDomainError, FitDegenerateError, TooFewSamplesError
from processors.core import WeatherVariable

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

MIN_FIT_SAMPLES = 50
B_FLOOR = 1e-6
SHIFT_FRACTION = 0.1
LN2 = math.log(2.0)


class TransformKind(str, Enum):
    IDENTITY = "Identity"
    LOG_SINH = "LogSinh"


DEFAULT_TRANSFORMS: Dict[WeatherVariable, TransformKind] = {
    WeatherVariable.TMAX: TransformKind.IDENTITY,
    WeatherVariable.TMIN: TransformKind.IDENTITY,
    WeatherVariable.RAIN: TransformKind.LOG_SINH,
    WeatherVariable.WIND_GUST: TransformKind.LOG_SINH,
    WeatherVariable.HUMIDITY_9AM: TransformKind.IDENTITY,
    WeatherVariable.HUMIDITY_3PM: TransformKind.IDENTITY,
}


# =============================================================================
# STABLE ELEMENTARY FUNCTIONS
# =============================================================================

def log_sinh(x: ArrayLike) -> ArrayLike:
    """ln(sinh(x)) for x > 0 without overflow: x - ln2 + ln(1 - e^{-2x})."""
    x = np.asarray(x, dtype=float)
    return x - LN2 + np.log(-np.expm1(-2.0 * x))


def log_coth(x: ArrayLike) -> ArrayLike:
    """ln(coth(x)) for x > 0."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-2.0 * x)
    return np.log1p(e) - np.log(-np.expm1(-2.0 * x))


def _asinh_exp(t: np.ndarray) -> np.ndarray:
    """arcsinh(e^t) for any real t."""
    out = np.empty_like(t)
    big = t > 0
    tb = t[big]
    out[big] = tb + np.log1p(np.sqrt(1.0 + np.exp(-2.0 * tb)))
    out[~big] = np.arcsinh(np.exp(t[~big]))
    return out


# =============================================================================
# TRANSFORM SPEC
# =============================================================================

@dataclass(frozen=True)
class TransformSpec:
    """
    A fitted transformation; Identity ignores a, b and y_shift.
    """
    kind: TransformKind = TransformKind.IDENTITY
    a: float = 0.0
    b: float = 1.0
    y_shift: float = 0.0

    def __post_init__(self):
        if self.kind == TransformKind.LOG_SINH:
            if not (math.isfinite(self.b) and self.b > 0):
                raise ValueError(f"LogSinh scale b must be positive and finite: {self.b}")
            if not (math.isfinite(self.a) and math.isfinite(self.y_shift)):
                raise ValueError("LogSinh offset and shift must be finite")

    @classmethod
    def identity(cls) -> "TransformSpec":
        return cls(TransformKind.IDENTITY)

    @property
    def is_identity(self) -> bool:
        return self.kind == TransformKind.IDENTITY

    @property
    def lower_support(self) -> float:
        """Infimum of the values the transform accepts."""
        if self.is_identity:
            return -math.inf
        return self.y_shift - self.a / self.b

    def forward(self, y: ArrayLike) -> ArrayLike:
        return forward(self, y)

    def inverse(self, z: ArrayLike) -> ArrayLike:
        return inverse(self, z)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "a": self.a, "b": self.b, "y_shift": self.y_shift}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TransformSpec":
        return cls(
            kind=TransformKind(data["kind"]),
            a=float(data.get("a", 0.0)),
            b=float(data.get("b", 1.0)),
            y_shift=float(data.get("y_shift", 0.0)),
        )


def _scalar_or_array(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(value)
    return value


def forward(spec: TransformSpec, y: ArrayLike) -> ArrayLike:
    """
    Apply the transform.

    Raises:
        TransformDomainError: If a + b*(y - y_shift) <= 0 for LogSinh
    """
    values = np.asarray(y, dtype=float)
    if spec.is_identity:
        return _scalar_or_array(values.copy(), y)

    arg = spec.a + spec.b * (values - spec.y_shift)
    if np.any(~(arg > 0)):
        bad = values[~(arg > 0)] if values.ndim else values
        raise TransformDomainError(
            f"Value outside log-sinh support (y > {spec.lower_support:.6g} required)",
            context={"values": np.atleast_1d(bad)[:5].tolist(), "lower_support": spec.lower_support}
        )
    return _scalar_or_array(log_sinh(arg) / spec.b, y)


def inverse(spec: TransformSpec, z: ArrayLike) -> ArrayLike:
    """
    Map transformed values back to canonical units.

    Raises:
        TransformDomainError: If z is not finite or underflows the support
    """
    values = np.asarray(z, dtype=float)
    if spec.is_identity:
        return _scalar_or_array(values.copy(), z)
    if not np.all(np.isfinite(values)):
        raise TransformDomainError("Cannot invert non-finite transformed value")

    t = np.atleast_1d(spec.b * values)
    arg = _asinh_exp(t)
    if np.any(arg <= 0):
        raise TransformDomainError(
            "Transformed value maps below the representable range",
            context={"z": np.atleast_1d(values)[:5].tolist()}
        )
    y = spec.y_shift + (arg - spec.a) / spec.b
    return _scalar_or_array(y if values.ndim else y[0], z)


def derivative(spec: TransformSpec, y: ArrayLike) -> ArrayLike:
    """dz/dy = coth(a + b*(y - y_shift)); 1 for Identity."""
    values = np.asarray(y, dtype=float)
    if spec.is_identity:
        return _scalar_or_array(np.ones_like(values), y)
    arg = spec.a + spec.b * (values - spec.y_shift)
    return _scalar_or_array(1.0 / np.tanh(arg), y)


# =============================================================================
# MAXIMUM LIKELIHOOD FIT
# =============================================================================

def transform_log_likelihood(spec: TransformSpec, samples: Iterable[float]) -> float:
    """
    Gaussian log-likelihood of the samples in original units.

    The transformed samples get their maximum-likelihood mean and
    variance; the Jacobian term sum(ln dz/dy) makes different
    transforms comparable.
    """
    y = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float)
    z = np.asarray(forward(spec, y), dtype=float)
    var = float(np.var(z))
    if not var > 0:
        return -math.inf
    n = y.size
    loglik = -0.5 * n * (math.log(2.0 * math.pi * var) + 1.0)
    if not spec.is_identity:
        arg = spec.a + spec.b * (y - spec.y_shift)
        loglik += float(np.sum(log_coth(arg)))
    return loglik


def _spec_from_theta(theta: np.ndarray, scale: float, y_shift: float) -> TransformSpec:
    a = math.exp(float(np.clip(theta[0], -20.0, 20.0)))
    b = max(math.exp(float(np.clip(theta[1], -20.0, 20.0))) / scale, B_FLOOR)
    return TransformSpec(TransformKind.LOG_SINH, a=a, b=b, y_shift=y_shift)


def choose_shift(samples: np.ndarray, lower_bound: Optional[float] = None) -> float:
    """min - 0.1*range, never above the variable's physical lower bound."""
    lo = float(np.min(samples))
    hi = float(np.max(samples))
    shift = lo - SHIFT_FRACTION * (hi - lo)
    if lower_bound is not None:
        shift = min(shift, float(lower_bound))
    return shift


def fit(
    samples: Iterable[float],
    kind: TransformKind = TransformKind.LOG_SINH,
    lower_bound: Optional[float] = None
) -> TransformSpec:
    """
    Fit transform parameters by maximum likelihood.

    (a, b) are searched on a log scale with a Nelder-Mead simplex started
    from the best point of a small grid; y_shift stays fixed.

    Args:
        samples: Calibration values in canonical units
        kind: Transform family
        lower_bound: Physical lower bound of the variable, caps y_shift so
            every physically valid value stays inside the support

    Returns:
        Fitted TransformSpec

    Raises:
        TooFewSamplesError: Fewer than 50 finite samples
        FitDegenerateError: Samples are constant
    """
    kind = TransformKind(kind)
    if kind == TransformKind.IDENTITY:
        return TransformSpec.identity()

    y = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float)
    y = y[np.isfinite(y)]
    if y.size < MIN_FIT_SAMPLES:
        raise TooFewSamplesError(
            f"Log-sinh fit needs at least {MIN_FIT_SAMPLES} samples, got {y.size}",
            context={"n": int(y.size)}
        )
    value_range = float(np.max(y) - np.min(y))
    if not value_range > 0:
        raise FitDegenerateError("Cannot fit a transform to constant samples")

    y_shift = choose_shift(y, lower_bound)
    scale = float(np.max(y) - y_shift)

    def objective(theta: np.ndarray) -> float:
        value = transform_log_likelihood(_spec_from_theta(theta, scale, y_shift), y)
        return -value if math.isfinite(value) else 1e300

    grid = [np.array([math.log(a0), math.log(b0)])
            for a0 in (0.01, 0.1, 1.0, 5.0)
            for b0 in (0.1, 1.0, 5.0)]
    start = min(grid, key=objective)
    start_value = objective(start)

    result = minimize(
        objective, start, method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000}
    )
    theta = result.x if result.fun <= start_value else start
    spec = _spec_from_theta(theta, scale, y_shift)

    logger.debug(
        f"Log-sinh fit: a={spec.a:.6g} b={spec.b:.6g} y_shift={spec.y_shift:.6g} "
        f"nll={min(result.fun, start_value):.6g} iterations={result.nit}"
    )
    return spec


def fit_for_variable(
    samples: Iterable[float],
    variable: WeatherVariable,
    kinds: Optional[Dict[WeatherVariable, TransformKind]] = None,
    lower_bound: Optional[float] = None
) -> TransformSpec:
    """Fit the configured transform family of a variable."""
    kind = (kinds or DEFAULT_TRANSFORMS).get(variable, DEFAULT_TRANSFORMS[variable])
    return fit(samples, kind, lower_bound=lower_bound)