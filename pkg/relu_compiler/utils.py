# -*- coding: utf-8 -*-
import json
from decimal import Decimal

import numpy as np


class JSONEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, Decimal):
            return str(o)
        if hasattr(o, "to_dict"):
            return o.to_dict()
        return super(JSONEncoder, self).default(o)


def format_float(value) -> str:
    """17 significant digits: enough to round-trip any IEEE double."""
    return format(float(value), ".17g")


def parse_json(data):
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    return json.loads(data)


def jsonify(data):
    return json.dumps(data, sort_keys=True, indent=4, cls=JSONEncoder)


def parse_vector(text: str) -> np.ndarray:
    """'0.3,0.7' -> array([0.3, 0.7])."""
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError(f"empty vector '{text}'")
    return np.array([float(p) for p in parts], dtype=float)


def parse_box(text: str):
    """'0,0:1,1' -> (lower, upper)."""
    if ":" not in text:
        raise ValueError(f"box '{text}' must look like 'lo1,lo2:up1,up2'")
    lo, up = text.split(":", 1)
    lower, upper = parse_vector(lo), parse_vector(up)
    if lower.shape != upper.shape:
        raise ValueError(f"box '{text}' has mismatched corners")
    return lower, upper
