"""Deterministic artifact emission.

Floats are written through repr() (shortest round-trip form), rows arrive
already sorted by the caller, and nothing derived from wall-clock time or
host identity is ever included, so a (config, seed) pair maps to
byte-identical files at any thread count.  Non-finite numbers are a hard
error: an Inf or NaN in a report means an upstream computation broke.
"""

from __future__ import annotations

import json
import math
from pathlib import Path


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError(f"E:harness:nonfinite: refusing to write {v!r}")
        return repr(v)
    if isinstance(v, (int, str)):
        return str(v)
    raise ValueError(f"E:harness:artifact: unsupported cell type {type(v).__name__}")


def _check_record(obj, path="record"):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"E:harness:nonfinite: {path} is {obj!r}")
    elif isinstance(obj, dict):
        for k, v in obj.items():
            _check_record(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_record(v, f"{path}[{i}]")


def write_csv(path, header, rows) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError("E:harness:artifact: row width does not match header")
        lines.append(",".join(_cell(v) for v in row))
    p.write_text("\n".join(lines) + "\n")
    return p


def write_jsonl(path, records) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in records:
        _check_record(rec)
        lines.append(json.dumps(rec, sort_keys=True, allow_nan=False))
    p.write_text("\n".join(lines) + "\n")
    return p
