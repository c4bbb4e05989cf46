"""CSV / JSON emission and trace directory round trips."""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .spectral import CircleGrid, Field

FMT = "%.17g"


def write_csv(path, header, rows, footer: str | None = None):
    """Comma-separated values with a header row and 17 significant digits."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(FMT % v for v in r) + "\n")
        if footer:
            for line in footer.splitlines():
                fh.write(f"# {line}\n")


def read_csv(path):
    """Return (header, data) ignoring ``#`` footer lines."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    body = [ln for ln in lines[1:] if ln and not ln.startswith("#")]
    data = np.array([[float(v) for v in ln.split(",")] for ln in body])
    return header, data.reshape(len(body), len(header))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def error_record(code: str, message: str, context: dict | None = None) -> dict:
    return {"code": code, "message": message, "context": _jsonable(context or {})}


# --------------------------------------------------------------------------
# flow traces on disk
# --------------------------------------------------------------------------

def write_trace_dir(out: Path, trace, n: int):
    """trace.csv (one row per snapshot) and u_<index>.csv per snapshot."""
    out = Path(out)
    rows = [[s.t, s.energy, s.dtu_l2, s.sphere_drift, s.max_u] for s in trace.states]
    write_csv(out / "trace.csv", ["t", "energy", "dtu_l2", "sphere_drift", "max_u"], rows)
    header = ["x"] + [f"u_{c + 1}" for c in range(n)]
    for idx, s in enumerate(trace.states):
        data = np.column_stack([s.u.grid.nodes, s.u.as2d()])
        write_csv(out / f"u_{idx}.csv", header, data)


def read_trace_dir(path):
    """Return a list of (t, Field) from a flow output directory."""
    path = Path(path)
    if not (path / "trace.csv").is_file():
        raise FileNotFoundError(f"no trace.csv in {path}")
    _, tr = read_csv(path / "trace.csv")
    files = sorted(path.glob("u_*.csv"), key=lambda p: int(re.findall(r"\d+", p.stem)[0]))
    if len(files) != tr.shape[0]:
        raise ValueError("snapshot files do not match trace.csv rows")
    states = []
    grid = None
    for t, f in zip(tr[:, 0], files):
        _, data = read_csv(f)
        if grid is None:
            grid = CircleGrid(data.shape[0])
        states.append((float(t), Field(grid, data[:, 1:])))
    return states


def write_plot_script(path, commands):
    """Plain-text plotting commands (gnuplot dialect) referencing emitted CSVs."""
    head = ["set datafile separator ','", "set key autotitle columnhead",
            "set terminal pngcairo size 900,600"]
    Path(path).write_text("\n".join(head + list(commands)) + "\n")
