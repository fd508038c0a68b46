"""Deterministic CSV/JSON writers: same inputs give byte-identical files."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np

FLOAT_FMT = "%.12g"


def write_csv(path: str | Path, columns: Sequence[str], rows: np.ndarray) -> Path:
    path = Path(path)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size and rows.shape[1] != len(columns):
        raise ValueError(f"{len(columns)} columns but rows have width {rows.shape[1]}")
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        if rows.size:
            np.savetxt(fh, rows, fmt=FLOAT_FMT, delimiter=",")
    return path


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + "\n")
    return path
