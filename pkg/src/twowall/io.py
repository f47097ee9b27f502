"""CSV and JSON writers with deterministic bytes."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from twowall.grid import Grid

SCHEMA_VERSION = 1


def _fmt(v) -> str:
    return repr(float(v))


def write_table(path: Path, header: list[str], columns: list[np.ndarray]) -> Path:
    """Write equal-length columns with a one-line header."""
    path = Path(path)
    rows = zip(*[np.asarray(c, dtype=float) for c in columns])
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_field(path: Path, grid: Grid, values: np.ndarray, name: str, unit: str,
                cells: bool = False) -> Path:
    """Write a lattice matrix ``values[i, n]`` with one row per time index.

    For ``cells=True`` the matrix has ``nt`` columns indexed by the cell
    ending at ``t_{n+1}``; the time column then holds that end time.
    """
    values = np.asarray(values, dtype=float)
    times = grid.t[1:] if cells else grid.t
    tlabel = "t_end[time]" if cells else "t[time]"
    header = ["n", tlabel] + [f"{name}(x={x:.6f})[{unit}]" for x in grid.x]
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for n, t in enumerate(times):
            fh.write(f"{n},{_fmt(t)}," + ",".join(_fmt(v) for v in values[:, n]) + "\n")
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isnan(v):
            return None
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_json(path: Path, payload: dict) -> Path:
    """Write ``payload`` plus ``schema_version``; keys sorted."""
    path = Path(path)
    doc = {"schema_version": SCHEMA_VERSION, **_clean(payload)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def checksum(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_entry(path: Path, root: Path) -> dict:
    path = Path(path)
    return {
        "path": str(path.relative_to(root)),
        "sha256": checksum(path),
        "bytes": path.stat().st_size,
    }
