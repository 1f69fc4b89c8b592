"""JSON helpers writing floats with 17 significant digits (bit-exact round trip)."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def _enc(obj, out: list):
    if isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)))
            out.append(": ")
            _enc(v, out)
        out.append("}")
    elif isinstance(obj, np.ndarray):
        _enc(obj.tolist(), out)
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _enc(v, out)
        out.append("]")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            out.append("NaN")
        elif math.isinf(x):
            out.append("Infinity" if x > 0 else "-Infinity")
        else:
            out.append(format(x, ".17g"))
    elif obj is None:
        out.append("null")
    else:
        out.append(json.dumps(obj))


def dumps(obj) -> str:
    out: list = []
    _enc(obj, out)
    return "".join(out)


def dump(obj, path):
    Path(path).write_text(dumps(obj) + "\n")


def load(path):
    return json.loads(Path(path).read_text())
