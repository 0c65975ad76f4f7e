"""File formats: JSON documents, grid-function CSV/binary, tables."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .grid import GridFunction, GridSpec

__all__ = [
    "SCHEMA_VERSION",
    "dump_json",
    "load_json",
    "read_grid_csv",
    "read_grid_binary",
    "read_matrix_binary",
    "to_jsonable",
    "write_convergence_csv",
    "write_grid_binary",
    "write_grid_csv",
    "write_matrix_binary",
    "write_table_csv",
]

SCHEMA_VERSION = "1.0"


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dump_json(doc: dict, path=None, kind: str | None = None) -> str:
    """Serialize with a schema-version field and sorted keys (byte-deterministic)."""
    payload = dict(to_jsonable(doc))
    payload["schema_version"] = SCHEMA_VERSION
    if kind is not None:
        payload["kind"] = kind
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_grid_csv(u: GridFunction, path=None) -> str:
    """Columns j_1..j_d (1-based), value; rows in lexicographic order, x_1 fastest."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    d = u.spec.d
    w.writerow([f"j{k}" for k in range(1, d + 1)] + ["value"])
    for idx, val in zip(u.indices(), u.values):
        w.writerow([int(i) for i in idx] + [repr(float(val))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_grid_csv(path, spec: GridSpec) -> GridFunction:
    """Inverse of ``write_grid_csv``; rows may come in any order."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = spec.d
    if header != [f"j{k}" for k in range(1, d + 1)] + ["value"]:
        raise ValueError(f"unexpected CSV header {header}")
    vals = np.full(spec.size, np.nan)
    n = spec.n
    for row in body:
        j = [int(x) - 1 for x in row[:d]]
        if any(not 0 <= x < n for x in j):
            raise ValueError(f"index {row[:d]} out of range")
        flat = sum(jk * n**k for k, jk in enumerate(j))
        vals[flat] = float(row[d])
    if np.isnan(vals).any():
        raise ValueError("CSV does not cover every interior node")
    return GridFunction(vals, spec)


def write_grid_binary(u: GridFunction, path) -> None:
    """Flat little-endian float64 in lexicographic order."""
    np.asarray(u.values, dtype="<f8").tofile(path)


def read_grid_binary(path, spec: GridSpec) -> GridFunction:
    return GridFunction(np.fromfile(path, dtype="<f8"), spec)


def write_matrix_binary(U: np.ndarray, path) -> None:
    """Row-major little-endian doubles; complex entries as interleaved (re, im)."""
    U = np.asarray(U)
    dtype = "<c16" if np.iscomplexobj(U) else "<f8"
    np.ascontiguousarray(U, dtype=dtype).tofile(path)


def read_matrix_binary(path, n_rows: int, complex_: bool = True) -> np.ndarray:
    data = np.fromfile(path, dtype="<c16" if complex_ else "<f8")
    return data.reshape(n_rows, -1)


def write_table_csv(columns: list[str], rows, path=None) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                    for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def write_convergence_csv(report, path=None) -> str:
    """Columns (M, h, error, order); order is the pairwise rate (blank on the first row)."""
    rows = zip(report.M, report.h, report.errors, report.pairwise_order)
    return write_table_csv(["M", "h", "error", "order"], rows, path)
