"""Ledger CSV and legacy-VTK output (plus readers used by the tests).

Floats are written with ``repr`` so files are bit-exact and round-trip.
Files are written to a temporary sibling and moved into place, so a reader
never sees a partial file.
"""
from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .grid_ops import Grid
from .state import State
from .thermo_diagnostics import CSV_COLUMNS, MONITOR_COLUMNS, LedgerRow

COLUMNS = CSV_COLUMNS + MONITOR_COLUMNS


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text: str) -> None:
    """Write ``text`` atomically (temporary sibling, then rename)."""
    _atomic_write(path, text)


def csv_text(rows: Iterable[LedgerRow]) -> str:
    lines = [",".join(COLUMNS)]
    lines += [",".join(_fmt(v) for v in row.values()) for row in rows]
    return "\n".join(lines) + "\n"


def write_csv(rows: Iterable[LedgerRow], path) -> None:
    """One header line then one line per ledger row."""
    _atomic_write(path, csv_text(rows))


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        data = [line.strip().split(",") for line in fh if line.strip()]
    if header != list(COLUMNS):
        raise ValueError(f"unexpected CSV header in {path}")
    cols = list(zip(*data)) if data else [()] * len(header)
    return {name: np.array([float(x) for x in col]) for name, col in zip(header, cols)}


def _vtk_order(grid: Grid, f: np.ndarray) -> np.ndarray:
    """C-ordered cell data to VTK point order (x fastest)."""
    g = grid.reshape(f)
    return np.moveaxis(g, (0, 1, 2), (2, 1, 0)).reshape((grid.n,) + np.shape(f)[1:])


def vtk_text(grid: Grid, state: State) -> str:
    """Legacy ASCII STRUCTURED_POINTS with the cell centres as points."""
    h = grid.spacing
    out = ["# vtk DataFile Version 3.0",
           f"thermovisc state t={_fmt(state.t)}",
           "ASCII",
           "DATASET STRUCTURED_POINTS",
           "DIMENSIONS {} {} {}".format(*grid.shape),
           "ORIGIN " + " ".join(_fmt(0.5 * x) for x in h),
           "SPACING " + " ".join(_fmt(x) for x in h),
           f"POINT_DATA {grid.n}"]

    def scalars(name, f):
        out.extend([f"SCALARS {name} double 1", "LOOKUP_TABLE default"])
        out.extend(_fmt(x) for x in _vtk_order(grid, f))

    scalars("rho", state.rho)
    out.append("VECTORS v double")
    out.extend(" ".join(_fmt(x) for x in row) for row in _vtk_order(grid, state.v))
    scalars("theta", state.theta)
    out.extend(["FIELD FieldData 1", f"E 6 {grid.n} double"])
    out.extend(" ".join(_fmt(x) for x in row) for row in _vtk_order(grid, state.E))
    return "\n".join(out) + "\n"


def write_vtk(grid: Grid, state: State, path) -> None:
    _atomic_write(path, vtk_text(grid, state))


def read_vtk(path) -> dict:
    """Minimal reader for files written by :func:`write_vtk`.  Arrays come
    back in the solver's C cell order."""
    with open(path, encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh]
    header = {ln.split()[0]: ln.split()[1:] for ln in lines[3:8]}
    shape = tuple(int(x) for x in header["DIMENSIONS"])
    n = int(header["POINT_DATA"][0])
    spacing = tuple(float(x) for x in header["SPACING"])
    grid = Grid(shape, tuple(s * m for s, m in zip(spacing, shape)))

    def from_vtk(block, comps):
        a = np.array([[float(x) for x in ln.split()] for ln in block]).reshape(
            (shape[2], shape[1], shape[0], comps))
        a = np.moveaxis(a, (0, 1, 2), (2, 1, 0)).reshape(n, comps)
        return a[:, 0] if comps == 1 else a

    arrays, i = {}, 8
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
        elif parts[0] == "SCALARS":
            arrays[parts[1]] = from_vtk(lines[i + 2:i + 2 + n], 1)
            i += 2 + n
        elif parts[0] == "VECTORS":
            arrays[parts[1]] = from_vtk(lines[i + 1:i + 1 + n], 3)
            i += 1 + n
        elif parts[0] == "FIELD":
            i += 1
            for _ in range(int(parts[2])):
                name, comps = lines[i].split()[:2]
                arrays[name] = from_vtk(lines[i + 1:i + 1 + n], int(comps))
                i += 1 + n
        else:
            raise ValueError(f"unexpected VTK line {i + 1}: {lines[i]!r}")
    t = float(lines[1].split("t=")[1])
    return {"grid": grid, "t": t, **arrays}


__all__ = ["COLUMNS", "write_text", "csv_text", "write_csv", "read_csv", "vtk_text", "write_vtk", "read_vtk"]
