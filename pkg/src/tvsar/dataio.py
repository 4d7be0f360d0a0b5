"""Reading and writing series, and a moving-average detrend."""
from __future__ import annotations

import csv
import math

import numpy as np

from tvsar.errors import InvalidArgument

__all__ = ["DataError", "read_series", "write_series", "detrend_moving_average"]


class DataError(InvalidArgument):
    """Unreadable input data; the message names the offending line."""


def _number(text):
    try:
        return float(text)
    except ValueError:
        return None


def read_series(path):
    """Read a CSV whose first column holds the series.

    A non-numeric first row is taken as a header. An optional second column
    (e.g. a date) is returned as strings. Returns ``(values, stamps or None)``.
    """
    values, stamps = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not any(cell.strip() for cell in row):
                continue
            first = row[0].strip()
            x = _number(first)
            if x is None and lineno == 1:
                continue
            if x is None or not math.isfinite(x):
                raise DataError(f"{path}: line {lineno}: expected a finite number, got {first!r}")
            values.append(x)
            stamps.append(row[1].strip() if len(row) > 1 else None)
    if not values:
        raise DataError(f"{path}: no observations")
    has_stamps = all(s is not None for s in stamps)
    return np.array(values), (stamps if has_stamps else None)


def write_series(path, y, stamps=None, name="y"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name] if stamps is None else [name, "time"])
        for i, v in enumerate(y):
            w.writerow([f"{v:.17g}"] if stamps is None else [f"{v:.17g}", stamps[i]])


def detrend_moving_average(y, window):
    """Subtract a centred moving average; near the ends the window shrinks."""
    y = np.asarray(y, dtype=float)
    if window < 1:
        raise InvalidArgument("detrend window must be positive")
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(y)])
    idx = np.arange(y.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + window - half, y.size)
    return y - (csum[hi] - csum[lo]) / (hi - lo)
