"""JSON output with every float written to 17 significant digits."""
from __future__ import annotations

import dataclasses
import json
import math

import numpy as np


def _plain(o):
    if dataclasses.is_dataclass(o) and not isinstance(o, type):
        return _plain(o.to_dict() if hasattr(o, "to_dict") else dataclasses.asdict(o))
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_plain(v) for v in o.tolist()]
    if isinstance(o, (complex, np.complexfloating)):
        return [float(o.real), float(o.imag)]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer, int)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        return float(o)
    if o is None or isinstance(o, str):
        return o
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _emit(o, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [json.dumps(k) + ": " + _emit(v, indent, level + 1) for k, v in o.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(o, list):
        if not o:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in o):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in o) + "]"
        return "[" + pad + ("," + pad).join(_emit(v, indent, level + 1) for v in o) + end + "]"
    if isinstance(o, bool) or o is None:
        return json.dumps(o)
    if isinstance(o, float):
        return _float(o)
    return json.dumps(o)


def dumps(obj, indent: int = 2) -> str:
    """Serialise ``obj`` (dicts, lists, dataclasses, numpy scalars, complex as ``[re, im]``)."""
    return _emit(_plain(obj), indent, 0) + "\n"
