"""Deterministic JSON text with fixed-precision floats.

Keys keep their insertion order, floats are written with a fixed number of
decimals, so equal inputs always give byte-identical output.
"""

from __future__ import annotations

import json
import math

import numpy as np


def _scalar(x, decimals: int) -> str:
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null"
        text = f"{x:.{decimals}f}"
        # avoid "-0.0000"
        if float(text) == 0.0:
            text = f"{0.0:.{decimals}f}"
        return text
    if isinstance(x, str):
        return json.dumps(x, ensure_ascii=False)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(obj, decimals: int = 4, indent: int = 2, _level: int = 0) -> str:
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, decimals, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_scalar(v, decimals) for v in obj) + "]"
        items = [pad + dumps(v, decimals, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    return _scalar(obj, decimals)
