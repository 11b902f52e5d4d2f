"""CSV/JSON artifacts.

Curve files are wide: a ``t`` column first, then one column per curve,
with a header row.  Design files have one row per run.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import Grid, GridFunction

__all__ = [
    "DataError",
    "write_curves",
    "read_curves",
    "write_table",
    "read_table",
    "write_json",
    "read_json",
]


class DataError(ValueError):
    """Malformed or missing input data."""


def _fmt(x: float) -> str:
    return repr(float(x))


def write_curves(path, t, names, matrix) -> None:
    """Write curves (rows of ``matrix``) as columns next to the grid."""
    M = np.atleast_2d(np.asarray(matrix, float))
    t = np.asarray(t, float)
    if M.shape[1] != t.size or len(names) != M.shape[0]:
        raise ValueError("curve matrix does not match grid or names")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *names])
        for i, ti in enumerate(t):
            w.writerow([_fmt(ti), *(_fmt(v) for v in M[:, i])])


def read_curves(path):
    """(Grid, names, matrix with one curve per row)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"curve file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0][0] != "t":
        raise DataError(f"{path}: expected a header row starting with 't'")
    names = rows[0][1:]
    try:
        data = np.array(rows[1:], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(names) + 1:
        raise DataError(f"{path}: ragged rows")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values")
    try:
        grid = Grid(data[:, 0])
    except ValueError as exc:
        raise DataError(f"{path}: bad grid ({exc})") from None
    return grid, names, data[:, 1:].T.copy()


def curves_as_functions(grid: Grid, matrix):
    return [GridFunction(grid, row) for row in matrix]


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_table(path):
    """(header, float matrix)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"table not found: {path}")
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    try:
        data = np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))
    except ValueError as exc:
        raise DataError(f"{path}: malformed table ({exc})") from None
    return rows[0], data


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
