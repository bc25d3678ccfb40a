import math

import numpy as np
import pytest

from contracts import FitDegenerateError, TooFewSamplesError, TransformDomainError
from processors.core import WeatherVariable
from processors.transform import (
    MIN_FIT_SAMPLES,
    TransformKind,
    TransformSpec,
    derivative,
    fit,
    fit_for_variable,
    forward,
    inverse,
    log_sinh,
    transform_log_likelihood,
)

SPEC = TransformSpec(TransformKind.LOG_SINH, a=0.5, b=0.2, y_shift=-1.0)


def test_log_sinh_reference_value():
    assert float(log_sinh(2.5)) == pytest.approx(1.80009, abs=2e-4)
    assert float(log_sinh(2.5)) == pytest.approx(math.log(math.sinh(2.5)), rel=1e-12)


def test_log_sinh_does_not_overflow():
    assert float(log_sinh(1000.0)) == pytest.approx(1000.0 - math.log(2.0))
    assert float(log_sinh(1e-8)) == pytest.approx(math.log(1e-8), rel=1e-6)


def test_identity_passes_values_through():
    spec = TransformSpec.identity()
    assert forward(spec, 12.5) == 12.5
    assert inverse(spec, -3.0) == -3.0
    assert derivative(spec, 7.0) == 1.0
    assert spec.lower_support == -math.inf


def test_inverse_recovers_values():
    values = np.linspace(0.0, 300.0, 61)
    z = forward(SPEC, values)
    np.testing.assert_allclose(inverse(SPEC, z), values, rtol=1e-10, atol=1e-9)
    assert forward(SPEC, 10.0) == pytest.approx(log_sinh(0.5 + 0.2 * 11.0) / 0.2)


def test_forward_is_increasing():
    z = forward(SPEC, np.linspace(0.0, 200.0, 401))
    assert np.all(np.diff(z) > 0)
    assert np.all(derivative(SPEC, np.linspace(0.0, 200.0, 11)) > 0)


def test_values_below_support_are_rejected():
    with pytest.raises(TransformDomainError):
        forward(SPEC, SPEC.lower_support - 1.0)
    with pytest.raises(TransformDomainError):
        inverse(SPEC, float("nan"))


def test_spec_validation_and_dict():
    with pytest.raises(ValueError):
        TransformSpec(TransformKind.LOG_SINH, a=1.0, b=0.0)
    assert TransformSpec.from_dict(SPEC.to_dict()) == SPEC


def test_fit_needs_enough_samples():
    with pytest.raises(TooFewSamplesError):
        fit(np.arange(MIN_FIT_SAMPLES - 1, dtype=float) + 1.0)


def test_fit_rejects_constant_samples():
    with pytest.raises(FitDegenerateError):
        fit(np.full(100, 4.0))


def test_fit_identity_kind_needs_nothing():
    assert fit([1.0, 2.0], TransformKind.IDENTITY).is_identity


def test_fitted_transform_beats_identity_on_skewed_data(rng):
    samples = rng.gamma(shape=1.5, scale=10.0, size=500)
    spec = fit(samples, TransformKind.LOG_SINH, lower_bound=0.0)
    assert spec.y_shift <= 0.0
    assert spec.lower_support <= 0.0
    assert transform_log_likelihood(spec, samples) > transform_log_likelihood(TransformSpec.identity(), samples)
    # every physically valid value stays inside the support
    forward(spec, np.array([0.0, samples.max() * 3.0]))


def test_fit_for_variable_uses_variable_default(rng):
    samples = rng.normal(25.0, 5.0, 200)
    assert fit_for_variable(samples, WeatherVariable.TMAX).is_identity
    gusts = rng.gamma(4.0, 10.0, 200) + 3.6
    assert fit_for_variable(gusts, WeatherVariable.WIND_GUST, lower_bound=3.6).kind == TransformKind.LOG_SINH
