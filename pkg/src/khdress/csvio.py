"""Plain CSV with a ``# key=value`` header block.

Floats are written with 17 significant digits so every file reloads to the
same binary values. Complex data is always split into separate columns by the
caller.
"""
from __future__ import annotations

import csv
import functools
import io
import subprocess
from pathlib import Path

import numpy as np

from . import __version__


@functools.lru_cache(maxsize=None)
def build_id() -> str:
    """git describe of the source tree, or the package version outside a checkout."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5, check=True)
        return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        return __version__


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, columns: dict, meta: dict | None = None):
    """Write equal-length columns; ``meta`` goes into the comment header."""
    names = list(columns)
    cols = [np.ravel(np.asarray(columns[k])) if not isinstance(columns[k], list) else columns[k] for k in names]
    n = {len(c) for c in cols}
    if len(n) > 1:
        raise ValueError(f"columns of unequal length: {dict(zip(names, map(len, cols)))}")
    header = {"build": build_id()}
    header.update(meta or {})
    buf = io.StringIO()
    for k, v in header.items():
        buf.write(f"# {k}={_fmt(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*cols):
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())
    return Path(path)


def _parse(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def read_csv(path):
    """Return (meta, columns). Numeric columns come back as numpy arrays."""
    meta, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = _parse(v)
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    if not rows:
        return meta, {}
    names, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(names):
        raw = [r[j] for r in body]
        vals = [_parse(v) for v in raw]
        if all(isinstance(v, (int, float)) for v in vals):
            cols[name] = np.array(vals, dtype=float if any(isinstance(v, float) for v in vals) else int)
        else:
            cols[name] = vals
    return meta, cols


def grid_columns(grid, **fields):
    """q1, q2 plus flattened node fields in C order."""
    Q1, Q2 = grid.mesh()
    out = {"q1": Q1.ravel(), "q2": Q2.ravel()}
    for k, v in fields.items():
        out[k] = np.ravel(v)
    return out
