"""File formats: realizations (JSON), propagator tables, trajectory CSV.

All CSV numbers are written with 17 significant digits so that a value
read back is bit-identical to the one written.  Files are written to a
temporary sibling and moved into place, so readers never see partial output.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .evolution import PropagatorTable
from .statespace import PassiveRealization
from .wellposed import EnergyLedger, Trajectory

__all__ = [
    "atomic_write_text",
    "fmt",
    "load_realization",
    "realization_from_dict",
    "realization_to_dict",
    "save_realization",
    "table_to_dict",
    "write_csv",
    "write_field_csv",
    "write_table_csv",
    "write_table_json",
    "write_trajectory_csv",
]


def fmt(v) -> str:
    return "%.17g" % v


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------- realizations

def _matrix_block(M: np.ndarray) -> dict:
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]),
            "data": [float(v) for v in np.asarray(M).ravel(order="C")]}


def _read_block(d: dict, key: str) -> np.ndarray:
    try:
        blk = d[key]
        rows, cols, data = int(blk["rows"]), int(blk["cols"]), blk["data"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"matrix block {key!r} needs rows, cols and data") from exc
    if len(data) != rows * cols:
        raise ValueError(f"matrix block {key!r} declares {rows}x{cols} but has {len(data)} entries")
    return np.asarray(data, dtype=float).reshape(rows, cols)


def realization_to_dict(sys: PassiveRealization) -> dict:
    return {"format": "passive-realization/1", "name": sys.name,
            "n_state": sys.n_state, "n_in": sys.n_in, "n_out": sys.n_out,
            **{k: _matrix_block(getattr(sys, k)) for k in "ABCD"}}


def realization_from_dict(d: dict) -> PassiveRealization:
    mats = {k: _read_block(d, k) for k in "ABCD"}
    sys = PassiveRealization(**mats, name=d.get("name", ""))
    for key, val in (("n_state", sys.n_state), ("n_in", sys.n_in), ("n_out", sys.n_out)):
        if key in d and int(d[key]) != val:
            raise ValueError(f"declared {key}={d[key]} does not match the matrices ({val})")
    return sys


def save_realization(sys: PassiveRealization, path) -> Path:
    return atomic_write_text(path, json.dumps(realization_to_dict(sys), indent=1) + "\n")


def load_realization(path) -> PassiveRealization:
    return realization_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- tables

def write_table_csv(table: PropagatorTable, path) -> Path:
    """Rows ``(i, j, frobenius, spectral)`` for every pair ``i >= j``."""
    rows = []
    for i, R in table.rows():
        fro = np.linalg.norm(R, "fro", axis=(1, 2))
        spectral = np.linalg.norm(R, 2, axis=(1, 2))
        rows.extend((i, j, float(fro[j]), float(spectral[j])) for j in range(i + 1))
    return write_csv(path, ["i", "j", "frobenius", "spectral"], rows)


def table_to_dict(table: PropagatorTable, max_nodes: int = 64) -> dict:
    if table.N + 1 > max_nodes:
        raise ValueError(f"table has {table.N + 1} nodes; full export is limited to {max_nodes}")
    g = table.grid
    entries = []
    for i, R in table.rows():
        for j in range(i + 1):
            entries.append({"i": i, "j": j, **_matrix_block(R[j])})
    return {"format": "propagator-table/1", "label": table.label,
            "grid": {"t0": g.t0, "h": g.h, "N": g.N}, "n": table.n, "entries": entries}


def write_table_json(table: PropagatorTable, path, max_nodes: int = 64) -> Path:
    return atomic_write_text(path, json.dumps(table_to_dict(table, max_nodes)) + "\n")


# ---------------------------------------------------------------- trajectories

def write_trajectory_csv(traj: Trajectory, ledger: EnergyLedger | None, path) -> Path:
    u, x, y = traj.u.values, traj.x.values, traj.y.values
    header = (["t"] + [f"u{k}" for k in range(u.shape[1])] + [f"x{k}" for k in range(x.shape[1])]
              + [f"y{k}" for k in range(y.shape[1])])
    cols = [traj.grid.nodes[:, None], u, x, y]
    if ledger is not None:
        header += ["stored", "in_energy", "out_energy", "pdot_term", "g_cross", "residual"]
        cols.append(np.column_stack([ledger.stored, ledger.in_energy, ledger.out_energy,
                                     ledger.pdot_term, ledger.g_cross, ledger.residual]))
    data = np.hstack(cols)
    return write_csv(path, header, ([float(v) for v in row] for row in data))


def write_field_csv(t, xi, z, zdot, strain, path) -> Path:
    """Long-format field snapshots ``(t, xi, z, zdot, strain)``.

    ``z`` and ``zdot`` are nodal (``(T, N+1)``); ``strain`` is per cell
    (``(T, N)``) and is reported at the right node of each cell (NaN at the
    clamped node).
    """
    rows = []
    for k, tk in enumerate(t):
        for p, xp in enumerate(xi):
            s = strain[k, p - 1] if p > 0 else float("nan")
            rows.append((float(tk), float(xp), float(z[k, p]), float(zdot[k, p]), float(s)))
    return write_csv(path, ["t", "xi", "z", "zdot", "strain"], rows)
