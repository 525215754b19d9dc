"""Deterministic CSV/JSON writing with atomic replacement."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    """17 significant digits, the shortest width that round-trips every double."""
    if isinstance(value, (str, np.str_)):
        return str(value)
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, columns: dict, comments=()) -> Path:
    """Write equal-length ``columns`` (name -> sequence) as CSV.

    ``comments`` become leading ``# key=value`` lines.
    """
    names = list(columns)
    cols = [np.asarray(columns[c]) for c in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns differ in length")
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(fmt(c[i]) for c in cols))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def jsonable(obj):
    """Convert NumPy scalars/arrays and non-finite floats for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_json(path, payload) -> Path:
    text = json.dumps(jsonable(payload), indent=2, sort_keys=True, allow_nan=False)
    return atomic_write_text(path, text + "\n")
