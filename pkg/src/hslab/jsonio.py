"""Deterministic JSON emission (numpy scalars and non-finite floats handled)."""
import json
import math
from enum import Enum

import numpy as np


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; null marks "not available"
        return x if math.isfinite(x) else None
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    return obj


def dumps(obj):
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))
