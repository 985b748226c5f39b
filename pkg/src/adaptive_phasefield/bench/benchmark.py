"""Edge-crack mode-I panel and the drivers built on it."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from ..mesh import TriMesh, build_rectangle_mesh, tag_interior_segment
from ..model import MaterialParams, effective_toughness
from ..solver import (LoadCase, LoadSchedule, LoadStepRecord, SolverConfig,
                      StaggerNonConvergence, run)
from .fit import FitError, PowerLawFit, fit_power_law
from .io import CsvSink, fmt, write_json, write_vtk

log = logging.getLogger(__name__)

# (h, eps) pairs of the mesh-size / length study
TABLE_PAIRS = ((0.024, 0.1), (0.012, 0.0875), (0.006, 0.075), (0.003, 0.0625), (0.0015, 0.05))
CONVERGE_SIZES = (0.0015, 0.003, 0.006, 0.009, 0.0125)
CONVERGE_U = 0.0042


@dataclass(frozen=True)
class BenchmarkSpec:
    """Rectangular panel with a straight mid-height edge crack.

    Attributes
    ----------
    width, height : float
        Panel size in mm.
    crack_from : {"left", "right"}
        Side the crack starts from.
    crack_tip : float
        Crack length as a fraction of the width.
    h : float
        Target size of the initial structured mesh.
    load : LoadCase
        Boundary tags and crack value of the displacement-controlled test.
    material : MaterialParams
    """

    width: float = 1.0
    height: float = 1.0
    crack_from: str = "left"
    crack_tip: float = 0.5
    h: float = 0.024
    load: LoadCase = field(default_factory=LoadCase)
    material: MaterialParams = field(default_factory=MaterialParams)

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0 and self.h > 0):
            raise ValueError("dimensions and mesh size must be positive")
        if not 0 < self.crack_tip < 1:
            raise ValueError("crack_tip must lie strictly between 0 and 1")
        if self.crack_from not in ("left", "right"):
            raise ValueError("crack_from must be 'left' or 'right'")

    @property
    def crack_segment(self):
        y = 0.5 * self.height
        length = self.crack_tip * self.width
        if self.crack_from == "left":
            return (0.0, y), (length, y)
        return (self.width - length, y), (self.width, y)

    def build_mesh(self) -> TriMesh:
        mesh = build_rectangle_mesh(self.width, self.height, self.h)
        start, end = self.crack_segment
        return tag_interior_segment(mesh, start, end, self.load.crack_tag)

    def to_dict(self) -> dict:
        return asdict(self)


def default_benchmark() -> BenchmarkSpec:
    return BenchmarkSpec()


def default_schedule() -> LoadSchedule:
    return LoadSchedule()


class VtkSink:
    """Writes ``fields_<step>.vtk`` every ``every`` steps (0 disables)."""

    def __init__(self, out_dir, every: int):
        self.out_dir = Path(out_dir)
        self.every = every

    def __call__(self, record: LoadStepRecord, mesh, state) -> None:
        if self.every > 0 and record.step % self.every == 0:
            write_vtk(self.out_dir / f"fields_{record.step}.vtk", mesh, state,
                      title=f"step {record.step} u_bar {fmt(record.u_bar)}")


@dataclass
class RunResult:
    status: int
    records: list[LoadStepRecord]
    error: str | None = None

    @property
    def peak_force(self) -> float:
        return max((r.force for r in self.records), default=0.0)


def run_benchmark(spec: BenchmarkSpec, config: SolverConfig,
                  schedule: LoadSchedule | Iterable[float], out_dir, vtk_every: int = 100,
                  stop_after_drop: float | None = None,
                  mesh: TriMesh | None = None) -> RunResult:
    """Run one benchmark and write ``steps.csv``, ``run.json`` and VTK snapshots.

    ``stop_after_drop`` ends the run early once the force has fallen below
    that fraction of its running peak (``None`` runs to ``u_max``).
    Status is 0 on success and 2 when the staggered solver gave up; rows
    written before the failure stay in the CSV.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = config.resolve(spec.material, spec.h)
    mesh = spec.build_mesh() if mesh is None else mesh
    echo = {"benchmark": spec.to_dict(), "solver": config.to_dict(),
            "schedule": _schedule_echo(schedule), "output": {"vtk_every": vtk_every,
                                                       "stop_after_drop": stop_after_drop}}
    write_json(out / "run.json", echo)

    records: list[LoadStepRecord] = []
    status, error = 0, None
    peak = [0.0]

    def watch(record, mesh, state):
        peak[0] = max(peak[0], record.force)
        if stop_after_drop is not None and record.force < stop_after_drop * peak[0]:
            raise _Stop

    with CsvSink(out / "steps.csv") as csv_sink:
        sinks = [csv_sink, VtkSink(out, vtk_every), lambda r, m, s: records.append(r), watch]
        try:
            run(mesh, spec.material, config, schedule, sinks, load=spec.load)
        except _Stop:
            pass
        except StaggerNonConvergence as exc:
            status, error = 2, str(exc)
            log.error("%s", exc)
    echo["result"] = {"status": status, "steps": len(records), "error": error,
                      "peak_force": max((r.force for r in records), default=0.0)}
    write_json(out / "run.json", echo)
    return RunResult(status, records, error)


def _schedule_echo(schedule) -> dict:
    if hasattr(schedule, "to_dict"):
        return schedule.to_dict()
    return {"values": [float(u) for u in schedule]}


class _Stop(Exception):
    pass


def study_h_eps(pairs, spec: BenchmarkSpec, schedule: LoadSchedule, out_dir,
                base_config: SolverConfig | None = None, vtk_every: int = 0,
                stop_after_drop: float | None = None) -> Path:
    """Fixed-length runs for each (h, eps) pair plus a summary table.

    Each pair writes into ``pair_<k>/``; ``summary.csv`` lists the peak
    force and the effective toughness G_c (1 + h / (4 eps)). A failing pair
    is reported with its status and the study moves on.
    """
    pairs = [tuple(map(float, p)) for p in pairs]
    if not pairs:
        raise ValueError("need at least one (h, eps) pair")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = base_config or SolverConfig(mode="fixed", fixed_eps=pairs[0][1])
    rows = []
    for k, (h, eps) in enumerate(pairs):
        cfg = replace(base, mode="fixed", fixed_eps=eps, adaptivity=False,
                      eps_refine=None, h_min=None)
        res = run_benchmark(replace(spec, h=h), cfg, schedule, out / f"pair_{k}",
                            vtk_every=vtk_every, stop_after_drop=stop_after_drop)
        peak = res.peak_force
        u_peak = max(res.records, key=lambda r: r.force).u_bar if res.records else 0.0
        rows.append([k, h, eps, peak, u_peak,
                     effective_toughness(spec.material.g_c, h, eps), res.status])
    path = out / "summary.csv"
    with open(path, "w") as fh:
        fh.write("pair,h,eps,peak_force,u_at_peak,g_eff,status\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


@dataclass(frozen=True)
class ConvergencePoint:
    mode: str
    h: float
    n_dofs: int
    n_cells: int
    energy: float


def converge(sizes, spec: BenchmarkSpec, out_dir, modes=("uniform", "spatial"),
             u_eval: float = CONVERGE_U, base_config: SolverConfig | None = None,
             schedule: LoadSchedule | None = None):
    """Energy at ``u_eval`` for a sweep of initial mesh sizes, then a power-law fit per mode.

    ``h_min`` follows each mesh as h/8. Writes ``converge.csv`` and
    ``fits.json``; returns (points, {mode: PowerLawFit or error text}).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schedule = schedule or replace(default_schedule(), u_max=u_eval)
    if u_eval not in schedule.values():
        raise ValueError(f"load schedule never reaches u = {u_eval}")
    base = base_config or SolverConfig()
    points: list[ConvergencePoint] = []
    for mode in modes:
        for h in sorted(map(float, sizes), reverse=True):
            cfg = replace(base, mode=mode, adaptivity=None, h_min=h / 8.0,
                          fixed_eps=base.fixed_eps if mode == "fixed" else None)
            res = run_benchmark(replace(spec, h=h), cfg, schedule,
                                out / f"{mode}_h{fmt(h)}", vtk_every=0)
            hit = [r for r in res.records if r.u_bar == u_eval]
            if res.status != 0 or not hit:
                log.error("mode %s h %s failed: %s", mode, h, res.error)
                continue
            r = hit[0]
            points.append(ConvergencePoint(mode, h, r.n_dofs, r.n_cells, r.energy))
    with open(out / "converge.csv", "w") as fh:
        fh.write("mode,h,n_dofs,n_cells,energy\n")
        for p in points:
            fh.write(f"{p.mode},{fmt(p.h)},{p.n_dofs},{p.n_cells},{fmt(p.energy)}\n")
    fits = fit_modes(points)
    write_json(out / "fits.json", {m: (f.to_dict() if isinstance(f, PowerLawFit) else {"error": f})
                                   for m, f in fits.items()})
    return points, fits


def fit_modes(points) -> dict:
    """Power-law fit per mode over (n_dofs, energy), sorted by n_dofs."""
    fits: dict = {}
    for mode in sorted({p.mode for p in points}):
        data = sorted((p.n_dofs, p.energy) for p in points if p.mode == mode)
        try:
            fits[mode] = fit_power_law(data)
        except FitError as exc:
            fits[mode] = str(exc)
    return fits


def read_convergence_csv(path) -> list[ConvergencePoint]:
    import csv
    with open(path, newline="") as fh:
        return [ConvergencePoint(r["mode"], float(r["h"]), int(r["n_dofs"]), int(r["n_cells"]),
                                 float(r["energy"])) for r in csv.DictReader(fh)]
