"""
CSV / JSON / binary exports and the value-series loader.

All CSVs have a header row, comma separators, UTF-8 and ``\\n`` line ends.
Floats are written with ``repr`` so that they round-trip exactly and a rerun
with the same inputs produces the same bytes.
"""

from __future__ import annotations

import csv
import json
import os
import struct

import numpy as np

from .errors import DataError, EmptyFile, MissingColumn, UnparsableNumber
from .fbm import FbmPath, TimeGrid

__all__ = [
    "write_csv",
    "read_csv_rows",
    "write_json",
    "write_path_csv",
    "write_path_frames",
    "read_path_frames",
    "write_moments_csv",
    "write_covariance_csv",
    "write_errors_csv",
    "write_surface_csv",
    "write_model_path_csv",
    "write_series_csv",
    "load_value_series",
]

_FRAME_HEADER = struct.Struct("<dqd")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            if isinstance(r, dict):
                r = [r.get(h) for h in header]
            w.writerow([_fmt(v) for v in r])


def read_csv_rows(path):
    """Header and rows as lists of strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def write_path_csv(path, fbm_path: FbmPath) -> None:
    """Columns ``t, value`` plus ``dB`` (blank on the last row) when known."""
    t = fbm_path.times
    dB = fbm_path.driving_increments
    if dB is None:
        write_csv(path, ("t", "value"), zip(t, fbm_path.values))
    else:
        dBx = list(dB) + [None]
        write_csv(path, ("t", "value", "dB"), zip(t, fbm_path.values, dBx))


def write_path_frames(path, values, grid: TimeGrid, H: float) -> int:
    """Binary frames, one per path: ``H`` (f8), ``n`` (i8), ``T`` (f8), then ``n + 1`` f8 values.

    Everything little-endian. Returns the number of bytes written.
    """
    values = np.atleast_2d(np.asarray(values, dtype="<f8"))
    if values.shape[1] != grid.n + 1:
        raise ValueError("values do not match the grid")
    head = _FRAME_HEADER.pack(float(H), grid.n, float(grid.T))
    written = 0
    with open(path, "wb") as fh:
        for row in values:
            written += fh.write(head) + fh.write(row.tobytes())
    return written


def read_path_frames(path):
    """Inverse of :func:`write_path_frames`: list of ``(H, T, values)``."""
    out = []
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0
    while pos < len(data):
        if pos + _FRAME_HEADER.size > len(data):
            raise DataError("truncated frame header")
        H, n, T = _FRAME_HEADER.unpack_from(data, pos)
        pos += _FRAME_HEADER.size
        end = pos + 8 * (n + 1)
        if end > len(data):
            raise DataError("truncated frame body")
        out.append((H, T, np.frombuffer(data[pos:end], dtype="<f8").astype(float)))
        pos = end
    return out


def write_moments_csv(path, moments, grid: TimeGrid) -> None:
    write_csv(path, ("k", "t", "mean", "var"),
              zip(range(grid.n + 1), grid.times, moments.mean, moments.var))


def write_covariance_csv(path, moments) -> None:
    """Long-form ``k, j, value`` triplets of the full covariance matrix."""
    cov = moments.cov
    m = cov.shape[0]
    rows = ((k, j, cov[k, j]) for k in range(m) for j in range(m))
    write_csv(path, ("k", "j", "value"), rows)


def write_errors_csv(path, report) -> None:
    d = report.to_dict()
    header = ("N", "H", "T", "n", "eps1", "eps2", "eps3", "source")
    write_csv(path, header, [d])


def write_surface_csv(path, surface) -> None:
    write_csv(path, ("q", "delta", "m"), surface.rows())


def write_model_path_csv(path, model_path) -> None:
    """Columns ``t, X, Y`` plus ``dB`` (blank on the last row) when known."""
    t = model_path.times
    if model_path.dB is None:
        write_csv(path, ("t", "X", "Y"), zip(t, model_path.X, model_path.Y))
    else:
        dB = list(model_path.dB) + [None]
        write_csv(path, ("t", "X", "Y", "dB"), zip(t, model_path.X, model_path.Y, dB))


def write_series_csv(path, values, name: str = "value") -> None:
    write_csv(path, (name,), ((v,) for v in values))


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_value_series(path, column: str | None = None, symbol: str | None = None,
                      symbol_column: str = "symbol"):
    """Read one numeric series from a CSV.

    A file whose first row is numeric is read as one value per row (first
    column). Otherwise the first row is a header and ``column`` picks the
    values (optional when there is a single column). ``symbol`` keeps only
    rows whose ``symbol_column`` matches, which suits multi-index files such as
    realized-measure libraries. Column names match case-insensitively.
    """
    path = os.fspath(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if any(c.strip() for c in r)]
    if not rows:
        raise EmptyFile(f"{path} is empty")
    if _is_number(rows[0][1][0]) and column is None and symbol is None:
        ci, data = 0, rows
    else:
        header = [h.strip().lower() for h in rows[0][1]]
        data = rows[1:]
        if column is None:
            if len(header) != 1:
                raise MissingColumn(f"{path} has columns {rows[0][1]}; choose one with column=")
            ci = 0
        elif column.lower() in header:
            ci = header.index(column.lower())
        else:
            raise MissingColumn(f"column {column!r} not found in header {rows[0][1]}")
        if symbol is not None:
            if symbol_column.lower() not in header:
                raise MissingColumn(f"column {symbol_column!r} not found in header {rows[0][1]}")
            si = header.index(symbol_column.lower())
            data = [(ln, r) for ln, r in data if len(r) > si and r[si].strip() == symbol]
    if not data:
        raise EmptyFile(f"{path} has no data rows" + (f" for symbol {symbol!r}" if symbol else ""))
    values, bad = [], []
    for ln, r in data:
        try:
            values.append(float(r[ci]))
        except (ValueError, IndexError):
            bad.append(ln)
    if bad:
        shown = ", ".join(map(str, bad[:10]))
        raise UnparsableNumber(f"{path}: malformed rows at lines {shown}"
                               + (" ..." if len(bad) > 10 else ""))
    return np.asarray(values)
