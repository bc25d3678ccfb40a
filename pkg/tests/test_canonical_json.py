from datetime import date
from pathlib import Path

import numpy as np
import pytest

from contracts import TestKind
from utils import canonical_json


def test_keys_are_sorted_and_floats_exact():
    text = canonical_json.dumps({"b": 0.1, "a": 2.0, "c": 3}, indent=None)
    assert text == '{"a":2.0,"b":0.10000000000000001,"c":3}\n'
    assert canonical_json.loads(text) == {"a": 2.0, "b": 0.1, "c": 3}


def test_same_value_same_bytes():
    first = {"z": [1.5, None, True], "a": {"y": "x", "b": date(2020, 1, 2)}}
    second = {"a": {"b": date(2020, 1, 2), "y": "x"}, "z": [1.5, None, True]}
    assert canonical_json.dumps(first) == canonical_json.dumps(second)


def test_numpy_enum_and_path_values():
    value = {"n": np.float64(1e-300), "i": np.int64(7), "arr": np.array([1.0, 2.5]),
             "kind": TestKind.SPATIAL, "p": Path("a/b")}
    data = canonical_json.loads(canonical_json.dumps(value))
    assert data == {"n": 1e-300, "i": 7, "arr": [1.0, 2.5], "kind": "Spatial", "p": "a/b"}


def test_non_finite_and_unknown_values_are_rejected():
    with pytest.raises(ValueError):
        canonical_json.dumps({"x": float("nan")})
    with pytest.raises(ValueError):
        canonical_json.dumps([float("inf")])
    with pytest.raises(TypeError):
        canonical_json.dumps({"x": object()})
