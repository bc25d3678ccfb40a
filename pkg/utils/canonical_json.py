"""
Canonical JSON

Byte-reproducible JSON: keys sorted, floats written with %.17g, NaN and
infinities rejected. Used for stored models and reports.
"""

import json
import math
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np


def _float(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"Non-finite float cannot be written canonically: {value}")
    text = "%.17g" % value
    if all(ch in "-0123456789" for ch in text):
        text += ".0"  # keep floats distinguishable from integers on reload
    return text


def _encode(value: Any, indent: Optional[int], level: int) -> str:
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        value = value.value
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _float(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, (date, datetime)):
        return json.dumps(value.isoformat())
    if isinstance(value, Path):
        return json.dumps(str(value))

    newline = "" if indent is None else "\n"
    pad = "" if indent is None else " " * (indent * (level + 1))
    close_pad = "" if indent is None else " " * (indent * level)
    separator = "," + newline
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k), ensure_ascii=False)}:{'' if indent is None else ' '}"
            f"{_encode(value[k], indent, level + 1)}"
            for k in sorted(value, key=str)
        ]
        return "{" + newline + separator.join(items) + newline + close_pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in value]
        return "[" + newline + separator.join(items) + newline + close_pad + "]"
    raise TypeError(f"Cannot encode {type(value).__name__} canonically")


def dumps(value: Any, indent: Optional[int] = 2) -> str:
    """Canonical text of value, newline terminated."""
    return _encode(value, indent, 0) + "\n"


def loads(text: str) -> Any:
    return json.loads(text)
