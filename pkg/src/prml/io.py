"""CSV layouts for the three observation types.

* scalar: one ``y`` column
* replicated: long format ``subject, x1..xd, y``, rows grouped by subject, equal ``r``
* series: wide ``y1..yT``

An optional ``truth`` column (0/1) is accepted for series files.
"""

from __future__ import annotations

import csv

import numpy as np

from .data import ReplicatedData, ScalarData, SeriesData


class InputError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _rows(path):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("empty file", 1) from None
        header = [h.strip() for h in header]
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"expected {len(header)} fields, found {len(row)}", reader.line_num)
            try:
                rows.append((reader.line_num, [float(c) for c in row]))
            except ValueError:
                raise InputError(f"non-numeric field in {row}", reader.line_num) from None
    if not rows:
        raise InputError("no data rows", 2)
    return header, rows


def _check_finite(rows):
    for line, vals in rows:
        if not np.all(np.isfinite(vals)):
            raise InputError("non-finite value", line)


def read_scalar(path) -> ScalarData:
    header, rows = _rows(path)
    if "y" not in header:
        raise InputError("scalar data needs a 'y' column", 1)
    _check_finite(rows)
    col = header.index("y")
    return ScalarData(np.array([vals[col] for _, vals in rows]))


def read_replicated(path) -> ReplicatedData:
    header, rows = _rows(path)
    xcols = [h for h in header if h.startswith("x") and h[1:].isdigit()]
    if header[:1] != ["subject"] or "y" not in header or not xcols:
        raise InputError("replicated data needs columns subject, x1..xd, y", 1)
    _check_finite(rows)
    xcols.sort(key=lambda h: int(h[1:]))
    ix = [header.index(h) for h in xcols]
    iy = header.index("y")
    groups, order, seen_done = {}, [], set()
    last = None
    for line, vals in rows:
        sid = vals[0]
        if sid != last:
            if sid in seen_done:
                raise InputError(f"subject {sid:g} is not contiguous", line)
            if last is not None:
                seen_done.add(last)
            groups[sid] = []
            order.append(sid)
            last = sid
        groups[sid].append((line, [vals[i] for i in ix], vals[iy]))
    r = len(groups[order[0]])
    for sid in order:
        if len(groups[sid]) != r:
            raise InputError(f"subject {sid:g} has {len(groups[sid])} replicates, expected {r}", groups[sid][0][0])
    x = np.array([[g[1] for g in groups[s]] for s in order])
    y = np.array([[g[2] for g in groups[s]] for s in order])
    return ReplicatedData(x, y)


def read_series(path):
    """Returns ``(SeriesData, truth or None)``."""
    header, rows = _rows(path)
    ycols = [h for h in header if h.startswith("y") and h[1:].isdigit()]
    if len(ycols) < 2:
        raise InputError("series data needs columns y1..yT with T >= 2", 1)
    _check_finite(rows)
    ycols.sort(key=lambda h: int(h[1:]))
    iy = [header.index(h) for h in ycols]
    y = np.array([[vals[i] for i in iy] for _, vals in rows])
    truth = None
    if "truth" in header:
        it = header.index("truth")
        for line, vals in rows:
            if vals[it] not in (0.0, 1.0):
                raise InputError("truth must be 0 or 1", line)
        truth = np.array([vals[it] == 1.0 for _, vals in rows])
    return SeriesData(y), truth


def read_data(path, kind: str):
    if kind == "scalar":
        return read_scalar(path)
    if kind == "replicated":
        return read_replicated(path)
    if kind == "series":
        return read_series(path)[0]
    raise ValueError(f"unknown data layout {kind!r}")


def _fmt(v):
    return repr(float(v))


def write_scalar(path, data: ScalarData) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"])
        w.writerows([[_fmt(v)] for v in data.y])


def write_replicated(path, data: ReplicatedData) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", *[f"x{k + 1}" for k in range(data.d)], "y"])
        for i in range(len(data)):
            for j in range(data.r):
                w.writerow([i + 1, *[_fmt(v) for v in data.x[i, j]], _fmt(data.y[i, j])])


def write_series(path, data: SeriesData, truth=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"y{t + 1}" for t in range(data.T)] + ([] if truth is None else ["truth"]))
        for i in range(len(data)):
            row = [_fmt(v) for v in data.y[i]]
            if truth is not None:
                row.append(int(bool(truth[i])))
            w.writerow(row)
