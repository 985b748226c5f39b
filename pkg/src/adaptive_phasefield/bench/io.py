"""CSV, legacy VTK and JSON outputs.

Every float is written with ``repr``, the shortest decimal string that
parses back to the same double.
"""

from __future__ import annotations

import csv
import json
from dataclasses import astuple, fields
from pathlib import Path

import numpy as np

from ..fem import FieldState
from ..mesh import TriMesh
from ..solver import LoadStepRecord

CSV_COLUMNS = [f.name for f in fields(LoadStepRecord)]


def fmt(x) -> str:
    """Shortest round-trip text for ints and floats."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class CsvSink:
    """Appends one row per accepted load step and flushes immediately."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")
        self._fh.flush()

    def __call__(self, record: LoadStepRecord, mesh=None, state=None) -> None:
        self._fh.write(",".join(fmt(v) for v in astuple(record)) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_records_csv(path, records) -> None:
    with CsvSink(path) as sink:
        for r in records:
            sink(r)


def read_records_csv(path) -> list[LoadStepRecord]:
    types = {f.name: f.type for f in fields(LoadStepRecord)}
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"{path}: expected columns {CSV_COLUMNS}, got {reader.fieldnames}")
        for row in reader:
            out.append(LoadStepRecord(**{k: (int(v) if types[k] in (int, "int") else float(v))
                                         for k, v in row.items()}))
    return out


def write_vtk(path, mesh: TriMesh, state: FieldState | None = None, title: str = "fields") -> None:
    """Legacy ASCII unstructured grid of triangles.

    Point data: displacement ``u`` and phase field ``c`` (vertex values,
    clamped to [0, 1]). Cell data: ``eps`` (mean of the three length
    values), ``eps_min`` and ``h_e``.
    """
    nv, nc = mesh.n_vertices, mesh.n_cells
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [f"{fmt(x)} {fmt(y)} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nc} {4 * nc}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += ["5"] * nc
    lines.append(f"CELL_DATA {nc}")
    lines += _scalars("h_e", mesh.cell_sizes)
    if state is not None:
        lines += _scalars("eps", state.eps.mean(axis=1))
        lines += _scalars("eps_min", state.eps.min(axis=1))
        lines.append(f"POINT_DATA {nv}")
        lines += _scalars("c", np.clip(state.c[:nv], 0.0, 1.0))
        lines.append("VECTORS u double")
        u = state.u.reshape(-1, 2)
        lines += [f"{fmt(a)} {fmt(b)} 0.0" for a, b in u]
    Path(path).write_text("\n".join(lines) + "\n")


def _scalars(name, values):
    return [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [fmt(v) for v in values]


def read_vtk(path) -> dict:
    """Parse a file written by :func:`write_vtk` into arrays.

    Returns a dict with ``points``, ``cells`` and one entry per data array.
    """
    tokens = Path(path).read_text().split("\n")
    out: dict = {}
    i = 4
    section = None
    while i < len(tokens):
        parts = tokens[i].split()
        i += 1
        if not parts:
            continue
        key = parts[0]
        if key == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([[float(t) for t in tokens[i + k].split()] for k in range(n)])
            i += n
        elif key == "CELLS":
            n = int(parts[1])
            out["cells"] = np.array([[int(t) for t in tokens[i + k].split()[1:]] for k in range(n)])
            i += n
        elif key == "CELL_TYPES":
            i += int(parts[1])
        elif key in ("CELL_DATA", "POINT_DATA"):
            section = int(parts[1])
        elif key == "SCALARS":
            out[parts[1]] = np.array([float(t) for t in tokens[i + 1:i + 1 + section]])
            i += 1 + section
        elif key == "VECTORS":
            out[parts[1]] = np.array([[float(t) for t in tokens[i + k].split()]
                                      for k in range(section)])
            i += section
        else:
            raise ValueError(f"unexpected VTK keyword {key!r}")
    return out


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
