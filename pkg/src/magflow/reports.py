"""Report writers: JSON documents, CSV trajectories, gnuplot data files."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and tuples for ``json``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def write_trajectory_csv(path, traj, header: dict) -> Path:
    """Rows ``t, q..., p..., H`` preceded by ``#``-prefixed JSON parameters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = traj.q.shape[1]
    cols = ["t"] + [f"q{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)] + ["H"]
    data = np.column_stack([traj.t, traj.q, traj.p, traj.energy])
    head = json.dumps(jsonable(header), indent=2, sort_keys=True)
    with path.open("w") as fh:
        for line in head.splitlines():
            fh.write(f"# {line}\n")
        fh.write(",".join(cols) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")
    return path


def read_trajectory_csv(path):
    """Return ``(header, columns, data)`` from :func:`write_trajectory_csv` output."""
    lines = Path(path).read_text().splitlines()
    head = [ln[2:] for ln in lines if ln.startswith("# ")]
    body = [ln for ln in lines if not ln.startswith("#")]
    cols = body[0].split(",")
    data = np.loadtxt(body[1:], delimiter=",", ndmin=2)
    return json.loads("\n".join(head)), cols, data


def write_dat(path, columns, rows, comment: str = "") -> Path:
    """Whitespace-separated columns for gnuplot, with a ``#`` header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join("nan" if v is None else f"{v:.17g}" for v in row) + "\n")
    return path
