"""Staggered load stepping with optional length-driven mesh adaptation.

Each load step alternates displacement, history, phase-field and length
updates until the fields stop changing. In spatial mode the mesh is then
refined wherever the length field is small compared with the local cell
size, and the same load is solved again until no cell is marked.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Iterable, Iterator, Protocol

import numpy as np

from .fem import (FieldState, LinearSystem, apply_dirichlet, assemble_phasefield,
                  cell_strain_energy, elasticity_matrix, reaction_force, solve_spd, spaces_for,
                  total_energy)
from .mesh import TriMesh, refine_marked, transfer_state
from .model import MaterialParams, epsilon_field, epsilon_uniform, update_history

log = logging.getLogger(__name__)

MODES = ("uniform", "spatial", "fixed")


class StaggerNonConvergence(RuntimeError):
    """The fixed-point loop hit its iteration cap."""

    def __init__(self, measure: float, iterations: int, step: int | None = None):
        where = "" if step is None else f" at load step {step}"
        super().__init__(f"staggered iteration did not converge{where} after "
                         f"{iterations} iterations (last measure {measure:.3e})")
        self.measure = measure
        self.iterations = iterations
        self.step = step


class RunawayRefinement(RuntimeError):
    """The adaptation loop exceeded its pass cap."""


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings of the staggered scheme and of the refinement rule.

    ``eps_refine`` and ``h_min`` may be left as ``None`` and are then
    resolved from the material and initial mesh by :meth:`resolve`
    (0.75 of the far-field length and one eighth of the mesh size).
    """

    mode: str = "spatial"
    fixed_eps: float | None = None
    stagger_tol: float = 1e-4
    max_stagger_iters: int = 500
    eps_refine: float | None = None
    h_min: float | None = None
    f_factor: float = 17.0
    adaptivity: bool | None = None
    max_refine_passes: int = 20

    def __post_init__(self):
        mode = self.mode.removesuffix("_eps")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if mode == "fixed" and not (self.fixed_eps is not None and self.fixed_eps > 0):
            raise ValueError("fixed mode needs a positive fixed_eps")
        if not self.stagger_tol > 0:
            raise ValueError("stagger_tol must be positive")
        if self.max_stagger_iters < 1 or self.max_refine_passes < 0:
            raise ValueError("iteration caps must be positive")
        if not self.f_factor >= 1:
            raise ValueError("f_factor must be at least 1")
        for name in ("eps_refine", "h_min"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.adaptivity and mode != "spatial":
            raise ValueError("adaptivity requires spatial mode")

    @property
    def adaptive(self) -> bool:
        return self.mode == "spatial" if self.adaptivity is None else bool(self.adaptivity)

    def resolve(self, material: MaterialParams, h: float) -> "SolverConfig":
        """Fill unset refinement constants for an initial mesh size ``h``."""
        eps_refine = self.eps_refine
        if eps_refine is None:
            eps_refine = 0.75 * material.far_field_length
        h_min = self.h_min if self.h_min is not None else h / 8.0
        return replace(self, eps_refine=eps_refine, h_min=h_min,
                       adaptivity=self.adaptive)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LoadSchedule:
    """Piecewise-constant increments: ``coarse`` below ``switch``, ``fine`` from there on."""

    coarse: float = 7e-4
    fine: float = 7e-7
    switch: float = 4.9e-3
    u_max: float = 0.0056

    def __post_init__(self):
        if not (self.coarse > 0 and self.fine > 0):
            raise ValueError("increments must be positive")
        if self.u_max < 0:
            raise ValueError("u_max must be non-negative")

    def increment(self, u_bar: float) -> float:
        return self.coarse if u_bar < self.switch else self.fine

    def __iter__(self) -> Iterator[float]:
        # rounding keeps accumulated values on the decimal grid, so 0.0049
        # and 0.0042 are hit exactly
        u_bar = 0.0
        while True:
            u_bar = round(u_bar + self.increment(u_bar), 12)
            if u_bar > self.u_max + 1e-15:
                return
            yield u_bar

    def values(self) -> list[float]:
        return list(self)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LoadCase:
    """Boundary data of a mode-I displacement-controlled test.

    The ``fixed_tag`` side is clamped, the ``loaded_tag`` side moves by
    (0, u_bar), and the phase field is held at ``crack_value`` on edges
    tagged ``crack_tag`` when such edges exist.
    """

    fixed_tag: str = "bottom"
    loaded_tag: str = "top"
    crack_tag: str = "crack"
    crack_value: float = 1.0

    def displacement_bcs(self, mesh: TriMesh, u_bar: float):
        for tag in (self.fixed_tag, self.loaded_tag):
            if tag not in mesh.tags:
                raise KeyError(f"mesh has no edges tagged {tag!r}")
        fixed = mesh.tagged_vertices(self.fixed_tag)
        loaded = mesh.tagged_vertices(self.loaded_tag)
        dofs = np.concatenate([2 * fixed, 2 * fixed + 1, 2 * loaded, 2 * loaded + 1])
        values = np.concatenate([np.zeros(2 * len(fixed)), np.zeros(len(loaded)),
                                 np.full(len(loaded), float(u_bar))])
        return dofs, values

    def phasefield_bcs(self, mesh: TriMesh):
        pairs = mesh.tagged_edges(self.crack_tag)
        if len(pairs) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        dofs = np.concatenate([np.unique(pairs), mesh.n_vertices + mesh.edge_index(pairs)])
        return dofs, np.full(len(dofs), self.crack_value)


MODE_I = LoadCase()


@dataclass(frozen=True)
class LoadStepRecord:
    """One accepted load step."""

    step: int
    u_bar: float
    force: float
    energy: float
    n_dofs: int
    n_cells: int
    stagger_iters: int

    def __post_init__(self):
        if self.n_dofs <= 0 or self.n_cells <= 0:
            raise ValueError("record must describe a non-empty discretisation")


class Sink(Protocol):
    def __call__(self, record: LoadStepRecord, mesh: TriMesh, state: FieldState) -> None: ...


def count_dofs(mesh: TriMesh, mode: str) -> int:
    """Displacement, phase-field and length unknowns together."""
    s = spaces_for(mesh)
    extra = {"spatial": 3 * mesh.n_cells, "uniform": 1, "fixed": 0}[mode]
    return s.n_u + s.n_c + extra


def initial_state(mesh: TriMesh, material: MaterialParams, config: SolverConfig) -> FieldState:
    eps0 = config.fixed_eps if config.mode == "fixed" else material.far_field_length
    return FieldState.zeros(mesh, eps0)


def convergence_measure(state_prev: FieldState, state_now: FieldState) -> float:
    """max(|dc|_inf, |du|_inf / max(|u|_inf, 1e-12))."""
    if state_prev.u.shape != state_now.u.shape or state_prev.c.shape != state_now.c.shape:
        raise ValueError("states live on different meshes")
    dc = float(np.max(np.abs(state_now.c - state_prev.c), initial=0.0))
    du = float(np.max(np.abs(state_now.u - state_prev.u), initial=0.0))
    scale = max(float(np.max(np.abs(state_now.u), initial=0.0)), 1e-12)
    return max(dc, du / scale)


def update_length(mesh: TriMesh, state: FieldState, material: MaterialParams,
                  mode: str) -> np.ndarray:
    if mode == "spatial":
        return epsilon_field(mesh, state.c, material)
    if mode == "uniform":
        return np.full((mesh.n_cells, 3), epsilon_uniform(mesh, state, material))
    return state.eps


def stagger_iterate(mesh: TriMesh, state: FieldState, material: MaterialParams,
                    config: SolverConfig, u_bar: float, load: LoadCase = MODE_I,
                    monitor: Callable[[int, FieldState, float], None] | None = None):
    """Fixed-point iteration at one load level.

    ``state.H`` is the history of previously accepted steps; every sweep
    takes the pointwise maximum of it and the current strain energy. The
    phase-field solve uses the length field of the previous sweep.

    Returns
    -------
    (FieldState, int)
        The converged state and the number of sweeps.
    """
    s = spaces_for(mesh)
    u_dofs, u_vals = load.displacement_bcs(mesh, u_bar)
    c_dofs, c_vals = load.phasefield_bcs(mesh)
    h_base = state.H
    current = state
    measure = math.inf
    for it in range(1, config.max_stagger_iters + 1):
        k = elasticity_matrix(s, current.c, material)
        u = solve_spd(apply_dirichlet(LinearSystem(k, np.zeros(s.n_u)), u_dofs, u_vals))
        psi = cell_strain_energy(s, u, material)
        h = update_history(h_base, np.broadcast_to(psi[:, None], h_base.shape))
        trial = current.replace(u=u, H=h)
        c = solve_spd(apply_dirichlet(assemble_phasefield(s, trial, material), c_dofs, c_vals))
        trial = trial.replace(c=c)
        trial = trial.replace(eps=update_length(mesh, trial, material, config.mode))
        measure = convergence_measure(current, trial)
        current = trial
        if monitor is not None:
            monitor(it, current, measure)
        if measure < config.stagger_tol:
            return current, it
    raise StaggerNonConvergence(measure, config.max_stagger_iters)


def euler_lagrange_residuals(mesh: TriMesh, state: FieldState, material: MaterialParams,
                             u_bar: float, load: LoadCase = MODE_I) -> tuple[float, float]:
    """Scaled infinity norms of the displacement and phase-field residuals.

    Each residual is restricted to unconstrained dofs and divided by
    ``max|diag A| * max(|x|_inf, 1e-12)``; the phase-field equation uses
    the history field as driving term.
    """
    s = spaces_for(mesh)
    out = []
    k = elasticity_matrix(s, state.c, material)
    fixed_u, _ = load.displacement_bcs(mesh, u_bar)
    a = assemble_phasefield(s, state, material)
    fixed_c, _ = load.phasefield_bcs(mesh)
    for matrix, rhs, x, fixed in ((k, np.zeros(s.n_u), state.u, fixed_u),
                                  (a.matrix, a.rhs, state.c, fixed_c)):
        r = matrix @ x - rhs
        r[fixed] = 0.0
        scale = np.abs(matrix.diagonal()).max() * max(np.abs(x).max(), 1e-12)
        out.append(float(np.abs(r).max() / scale))
    return out[0], out[1]


def mark_cells(mesh: TriMesh, state: FieldState, config: SolverConfig) -> np.ndarray:
    """Cells whose length is below the threshold and not yet resolved.

    A cell is marked when eps_e < eps_refine, h_e > eps_e / f_factor and
    its children would still satisfy h_e / 2 >= h_min, with eps_e the
    smallest of its three length values.
    """
    if config.eps_refine is None or config.h_min is None:
        raise ValueError("resolve the configuration before marking")
    eps_e = state.eps.min(axis=1)
    h_e = mesh.cell_sizes
    mask = ((eps_e < config.eps_refine) & (h_e > eps_e / config.f_factor)
            & (h_e / 2.0 >= config.h_min))
    return np.flatnonzero(mask)


def adapt_loop(mesh: TriMesh, state: FieldState, material: MaterialParams,
               config: SolverConfig, u_bar: float, load: LoadCase = MODE_I):
    """Refine and re-solve at a fixed load until no cell is marked.

    Returns
    -------
    (TriMesh, FieldState, int passes, int stagger sweeps spent)
    """
    passes = 0
    sweeps = 0
    while True:
        marked = mark_cells(mesh, state, config)
        if len(marked) == 0:
            return mesh, state, passes, sweeps
        if passes >= config.max_refine_passes:
            raise RunawayRefinement(
                f"still marking {len(marked)} cells after {passes} refinement passes")
        fine = refine_marked(mesh, marked)
        state = transfer_state(mesh, fine, state)
        mesh = fine
        passes += 1
        state, it = stagger_iterate(mesh, state, material, config, u_bar, load)
        sweeps += it


def run(mesh: TriMesh, material: MaterialParams, config: SolverConfig,
        schedule: Iterable[float], sinks: Iterable[Sink] = (), load: LoadCase = MODE_I,
        state: FieldState | None = None) -> list[LoadStepRecord]:
    """Load stepping with the staggered scheme and optional adaptation.

    ``config`` should be resolved; unresolved refinement constants are
    filled from the largest cell of ``mesh``. Records are pushed to every
    sink after each accepted step. A failing step raises
    :class:`StaggerNonConvergence` carrying its index; sinks have already
    received all earlier records.
    """
    if config.eps_refine is None or config.h_min is None:
        config = config.resolve(material, float(mesh.cell_sizes.max()))
    sinks = list(sinks)
    if state is None:
        state = initial_state(mesh, material, config)
    records: list[LoadStepRecord] = []
    for step, u_bar in enumerate(schedule, start=1):
        try:
            state, iters = stagger_iterate(mesh, state, material, config, u_bar, load)
            if config.adaptive:
                mesh, state, _, extra = adapt_loop(mesh, state, material, config, u_bar, load)
                iters += extra
        except StaggerNonConvergence as exc:
            raise StaggerNonConvergence(exc.measure, exc.iterations, step) from exc
        record = LoadStepRecord(
            step=step, u_bar=float(u_bar),
            force=reaction_force(mesh, state, material, load.loaded_tag),
            energy=total_energy(mesh, state, material),
            n_dofs=count_dofs(mesh, config.mode), n_cells=mesh.n_cells,
            stagger_iters=iters)
        records.append(record)
        log.info("step %d u=%.7g iters=%d dofs=%d energy=%.10g force=%.10g", step,
                 record.u_bar, iters, record.n_dofs, record.energy, record.force)
        for sink in sinks:
            sink(record, mesh, state)
    return records
