"""Assembly of the displacement and phase-field systems and energy evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..model import MaterialParams, strain_energy_density
from .spaces import FunctionSpaces, spaces_for

SOLVE_RTOL = 1e-10


class NumericalFailure(RuntimeError):
    """A linear solve broke down or missed its residual target."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    constrained_values: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _spaces(mesh_or_spaces) -> FunctionSpaces:
    if isinstance(mesh_or_spaces, FunctionSpaces):
        return mesh_or_spaces
    return spaces_for(mesh_or_spaces)


def cell_strain_energy(mesh, u: np.ndarray, material: MaterialParams) -> np.ndarray:
    """Strain energy density of the undegraded material, constant per cell."""
    return strain_energy_density(_spaces(mesh).displacement_gradients(u), material)


def elasticity_matrix(mesh, c: np.ndarray, material: MaterialParams) -> sp.csr_matrix:
    s = _spaces(mesh)
    if c.shape != (s.n_c,):
        raise ValueError("phase field does not match the mesh")
    degradation = np.sum(s.dx * (1.0 - s.c_at_quad(c)) ** 2, axis=1)
    b = s.strain_matrices
    local = np.einsum("cki,kl,clj->cij", b, material.elasticity_matrix, b, optimize=True)
    local *= degradation[:, None, None]
    return s.u_pattern.matrix(local)


def assemble_elasticity(mesh, state, material: MaterialParams) -> LinearSystem:
    """Stiffness of int (1-c)^2 strain(v) : C : strain(u) dx with zero load."""
    s = _spaces(mesh)
    return LinearSystem(elasticity_matrix(s, state.c, material), np.zeros(s.n_u))


def assemble_phasefield(mesh, state, material: MaterialParams, driving=None) -> LinearSystem:
    """Phase-field system with P2 test functions q:

        int (G_c/eps + 2 D) c q + G_c eps grad c . grad q dx = int 2 D q dx

    ``driving`` (D) is an (nc, nq) array; it defaults to the history field.
    """
    s = _spaces(mesh)
    driving = state.H if driving is None else np.asarray(driving, dtype=float)
    if driving.shape != (s.mesh.n_cells, s.n_quad):
        raise ValueError("driving field must have one value per quadrature point")
    eps_q = s.eps_at_quad(state.eps)
    if np.any(eps_q <= 0):
        raise ValueError("length field must be positive at every quadrature point")
    g_c = material.g_c
    react = s.dx * (g_c / eps_q + 2.0 * driving)                 # (nc, nq)
    diff = s.dx * g_c * eps_q                                     # (nc, nq)
    metric = np.einsum("cjd,ckd->cjk", s.grad_lambda, s.grad_lambda)
    # contract against precomputed products of reference derivatives
    w = (diff[:, :, None, None] * metric[:, None]).reshape(s.mesh.n_cells, -1)
    local = (w @ s.p2_stiffness_table + react @ s.p2_mass_table).reshape(-1, 6, 6)
    rhs_local = (2.0 * s.dx * driving) @ s.p2_at_q
    rhs = np.bincount(s.c_dofs.ravel(), weights=rhs_local.ravel(), minlength=s.n_c)
    return LinearSystem(s.c_pattern.matrix(local), rhs)


def apply_dirichlet(system: LinearSystem, dofs, values) -> LinearSystem:
    """Symmetric elimination of prescribed dofs.

    Constrained rows and columns become identity rows with the prescribed
    value on the right-hand side; the column contributions are lifted to
    the right-hand side of the free rows.
    """
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape).copy()
    n = system.matrix.shape[0]
    if dofs.size == 0:
        return system
    if dofs.min() < 0 or dofs.max() >= n:
        raise IndexError("constrained dof out of range")
    order = np.argsort(dofs, kind="stable")
    dofs, values = dofs[order], values[order]
    dup = dofs[1:] == dofs[:-1]
    if np.any(dup & (values[1:] != values[:-1])):
        raise ValueError("conflicting prescriptions for the same dof")
    keep = np.concatenate([[True], ~dup])
    dofs, values = dofs[keep], values[keep]
    if system.constrained_dofs.size:
        dofs = np.concatenate([system.constrained_dofs, dofs])
        values = np.concatenate([system.constrained_values, values])
        dofs, first = np.unique(dofs, return_index=True)
        values = values[first]

    g = np.zeros(n)
    g[dofs] = values
    free = np.ones(n)
    free[dofs] = 0.0
    a = system.matrix
    rhs = free * (system.rhs - a @ g) + g
    d_free = sp.diags(free)
    matrix = (d_free @ a @ d_free + sp.diags(1.0 - free)).tocsr()
    matrix.eliminate_zeros()
    return LinearSystem(matrix, rhs, dofs, values)


def solve_spd(system: LinearSystem) -> np.ndarray:
    """Direct sparse solve with residual verification.

    Raises :class:`NumericalFailure` when the relative residual exceeds
    1e-10 after two steps of iterative refinement, or when the solution
    reveals the matrix is not positive definite.
    """
    a = system.matrix.tocsc()
    b = np.asarray(system.rhs, dtype=float)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros_like(b)
    try:
        lu = spla.splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:  # exactly singular
        raise NumericalFailure(f"factorisation failed: {exc}") from exc
    x = lu.solve(b)
    rel = np.inf
    for _ in range(3):
        r = b - a @ x
        rel = np.linalg.norm(r) / norm_b
        if rel <= SOLVE_RTOL:
            break
        x = x + lu.solve(r)
    if not np.all(np.isfinite(x)) or rel > SOLVE_RTOL:
        raise NumericalFailure("linear solve missed its residual target", rel)
    if x @ b <= 0.0:
        raise NumericalFailure("matrix is not positive definite", rel)
    return x


def total_energy(mesh, state, material: MaterialParams, quad_degree: int | None = None) -> float:
    """Quadrature value of the full energy functional (per unit thickness)."""
    s = _spaces(mesh) if quad_degree is None else FunctionSpaces(
        mesh.mesh if isinstance(mesh, FunctionSpaces) else mesh, quad_degree)
    psi = cell_strain_energy(s, state.u, material)
    c_q = s.c_at_quad(state.c)
    g2 = np.sum(s.grad_c_at_quad(state.c) ** 2, axis=-1)
    eps_q = s.eps_at_quad(state.eps)
    density = ((1.0 - c_q) ** 2 * psi[:, None]
               + material.g_c * ((c_q**2 + material.eta) / (2.0 * eps_q) + 0.5 * eps_q * g2)
               + material.beta * eps_q)
    return float(np.sum(s.dx * density))


def energy_parts(mesh, state, material: MaterialParams) -> dict:
    """Elastic, crack (c-dependent) and length-penalty contributions."""
    s = _spaces(mesh)
    psi = cell_strain_energy(s, state.u, material)
    c_q = s.c_at_quad(state.c)
    g2 = np.sum(s.grad_c_at_quad(state.c) ** 2, axis=-1)
    eps_q = s.eps_at_quad(state.eps)
    return {
        "elastic": float(np.sum(s.dx * (1.0 - c_q) ** 2 * psi[:, None])),
        "crack": float(np.sum(s.dx * material.g_c * (c_q**2 / (2 * eps_q) + 0.5 * eps_q * g2))),
        "length": float(np.sum(s.dx * (material.g_c * material.eta / (2 * eps_q)
                                       + material.beta * eps_q))),
    }


def internal_forces(mesh, state, material: MaterialParams) -> np.ndarray:
    """Unconstrained residual K(c) u of the displacement problem."""
    return elasticity_matrix(mesh, state.c, material) @ state.u


def reaction_force(mesh, state, material: MaterialParams, tag: str, component: int = 1) -> float:
    """Sum of the internal forces over the vertices of a tagged boundary."""
    m = _spaces(mesh).mesh
    if tag not in set(m.boundary_tags.tolist()):
        raise KeyError(f"unknown boundary tag {tag!r}")
    verts = np.unique(m.boundary_edges[m.boundary_tags == tag])
    f = internal_forces(mesh, state, material)
    return float(np.sum(f[2 * verts + component]))


def phasefield_residual(mesh, state, material: MaterialParams, driving=None) -> np.ndarray:
    system = assemble_phasefield(mesh, state, material, driving)
    return system.matrix @ state.c - system.rhs
