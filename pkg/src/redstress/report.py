"""Deterministic CSV/JSON report emission and the matching CSV reader."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1"

CONFIDENCE_BUCKETS = ((0, 10, "0-10"), (11, 50, "11-50"), (51, 200, "51-200"),
                      (201, 1000, "201-1000"), (1001, 10000, "1001-10000"))


def confidence_bucket(n: int) -> str:
    for lo, hi, label in CONFIDENCE_BUCKETS:
        if lo <= n <= hi:
            return label
    return "10000+"


def _plain(v):
    """Convert numpy scalars and non-finite floats into JSON-safe values."""
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, float):
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    return v


def format_cell(v) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_cell(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    if s in ("inf", "-inf"):
        return float(s)
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_cell(r.get(c)) for c in columns])
    return path


def read_report_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    body = {"schema_version": SCHEMA_VERSION}
    body.update(payload)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_plain(body), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path
