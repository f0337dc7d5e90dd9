"""CSV and JSON writers with round-trip-exact number formatting."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

FLOAT_FORMAT = ".17g"


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), FLOAT_FORMAT)


def write_csv(path, header: Sequence[str], columns: Sequence) -> Path:
    """Write equal-length ``columns`` under ``header``; floats use 17 significant digits."""
    path = Path(path)
    cols = [list(c) if not isinstance(c, np.ndarray) else c.tolist() for c in columns]
    if len(cols) != len(header):
        raise ValueError(f"{len(header)} header names for {len(cols)} columns")
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns have different lengths")
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(format_value(c[i]) for c in cols))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_rows(path, header: Sequence[str], rows: Sequence[dict]) -> Path:
    return write_csv(path, header, [[row[h] for row in rows] for h in header])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and float matrix of a numeric CSV written by :func:`write_csv`."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    return header, data.reshape(len(lines) - 1, len(header))


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_table(directory, stem: str, header: Sequence[str], columns: Sequence, fmt: str) -> list[Path]:
    """Write one table as ``stem.csv``, ``stem.json`` (column arrays) or both."""
    directory = Path(directory)
    out = []
    if fmt in ("csv", "both"):
        out.append(write_csv(directory / f"{stem}.csv", header, columns))
    if fmt in ("json", "both"):
        out.append(write_json(directory / f"{stem}.json", {h: list(c) for h, c in zip(header, columns)}))
    return out
