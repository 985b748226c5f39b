"""Discrete function spaces on a :class:`TriMesh`.

* displacement: continuous P1, two components, dofs interleaved ``2*v + k``;
* phase field: continuous P2, vertex dofs first then one dof per edge;
* length field: discontinuous P1 stored as an (nc, 3) array of vertex values;
* history: one value per cell and quadrature point, (nc, nq).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .quadrature import quadrature_rule

QUAD_DEGREE = 4

# barycentric coordinates of the six P2 nodes: vertices then edge midpoints
P2_NODES = np.array([
    [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
    [0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5],
])


def p2_values(lam: np.ndarray) -> np.ndarray:
    """P2 basis at barycentric points (..., 3) -> (..., 6)."""
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=-1)


def p2_bary_derivatives(lam: np.ndarray) -> np.ndarray:
    """d(phi_i)/d(lambda_j) at barycentric points (..., 3) -> (..., 6, 3)."""
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    z = np.zeros_like(l0)
    rows = [
        [4 * l0 - 1, z, z],
        [z, 4 * l1 - 1, z],
        [z, z, 4 * l2 - 1],
        [4 * l1, 4 * l0, z],
        [z, 4 * l2, 4 * l1],
        [4 * l2, z, 4 * l0],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


class _Pattern:
    """Sparsity pattern of a dof map, reused for every assembly on a mesh."""

    def __init__(self, dofs: np.ndarray, n_dofs: int):
        k = dofs.shape[1]
        rows = np.repeat(dofs, k, axis=1).ravel()
        cols = np.tile(dofs, (1, k)).ravel()
        keys = rows.astype(np.int64) * n_dofs + cols
        uniq, self.slot = np.unique(keys, return_inverse=True)
        self.indices = (uniq % n_dofs).astype(np.int32)
        counts = np.bincount(uniq // n_dofs, minlength=n_dofs)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.n_dofs = n_dofs
        self.nnz = len(uniq)

    def matrix(self, local: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.slot, weights=local.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr),
                             shape=(self.n_dofs, self.n_dofs))


class FunctionSpaces:
    """Geometry, dof maps and quadrature data shared by all assemblies."""

    def __init__(self, mesh, quad_degree: int = QUAD_DEGREE):
        self.mesh = mesh
        self.quad_degree = quad_degree
        self.qpts, self.qwts = quadrature_rule(quad_degree)
        p = mesh.vertices[mesh.cells]
        self.area = mesh.signed_areas
        # gradients of barycentric coordinates, (nc, 3, 2)
        i, j, k = [0, 1, 2], [1, 2, 0], [2, 0, 1]
        g = np.empty((mesh.n_cells, 3, 2))
        g[:, :, 0] = p[:, j, 1] - p[:, k, 1]
        g[:, :, 1] = p[:, k, 0] - p[:, j, 0]
        self.grad_lambda = g / (2.0 * self.area)[:, None, None]
        # physical quadrature weights, (nc, nq)
        self.dx = 2.0 * self.area[:, None] * self.qwts[None, :]
        self.n_vertices = mesh.n_vertices
        self.n_u = 2 * mesh.n_vertices
        self.n_c = mesh.n_vertices + mesh.n_edges
        self.u_dofs = np.empty((mesh.n_cells, 6), dtype=np.int64)
        self.u_dofs[:, 0::2] = 2 * mesh.cells
        self.u_dofs[:, 1::2] = 2 * mesh.cells + 1
        self.c_dofs = np.hstack([mesh.cells, mesh.n_vertices + mesh.cell_edges])
        self.p2_at_q = p2_values(self.qpts)                      # (nq, 6)
        self.p2_dlam_at_q = p2_bary_derivatives(self.qpts)       # (nq, 6, 3)

    @property
    def n_quad(self) -> int:
        return len(self.qwts)

    @cached_property
    def u_pattern(self) -> _Pattern:
        return _Pattern(self.u_dofs, self.n_u)

    @cached_property
    def c_pattern(self) -> _Pattern:
        return _Pattern(self.c_dofs, self.n_c)

    @cached_property
    def p2_stiffness_table(self) -> np.ndarray:
        """(nq*9, 36): entries d_q[a, j] d_q[b, k] arranged for a matrix product."""
        d = self.p2_dlam_at_q
        t = np.einsum("qaj,qbk->qjkab", d, d)
        return t.reshape(self.n_quad * 9, 36)

    @cached_property
    def p2_mass_table(self) -> np.ndarray:
        n = self.p2_at_q
        return np.einsum("qa,qb->qab", n, n).reshape(self.n_quad, 36)

    @cached_property
    def c_node_coords(self) -> np.ndarray:
        m = self.mesh
        mids = m.vertices[m.edges].mean(axis=1)
        return np.vstack([m.vertices, mids])

    @cached_property
    def quad_points(self) -> np.ndarray:
        """Physical coordinates of quadrature points, (nc, nq, 2)."""
        p = self.mesh.vertices[self.mesh.cells]
        return np.einsum("qi,cid->cqd", self.qpts, p)

    @cached_property
    def strain_matrices(self) -> np.ndarray:
        """Constant strain-displacement matrices (nc, 3, 6), Voigt with engineering shear."""
        g = self.grad_lambda
        b = np.zeros((self.mesh.n_cells, 3, 6))
        b[:, 0, 0::2] = g[:, :, 0]
        b[:, 1, 1::2] = g[:, :, 1]
        b[:, 2, 0::2] = g[:, :, 1]
        b[:, 2, 1::2] = g[:, :, 0]
        return b

    def p2_gradients(self, lam: np.ndarray) -> np.ndarray:
        """Physical gradients of the six P2 basis functions at one barycentric point, (nc, 6, 2)."""
        d = p2_bary_derivatives(np.asarray(lam, dtype=float))
        return np.einsum("aj,cjd->cad", d, self.grad_lambda)

    def c_at_quad(self, c: np.ndarray) -> np.ndarray:
        return c[self.c_dofs] @ self.p2_at_q.T

    def grad_c_at_quad(self, c: np.ndarray) -> np.ndarray:
        """Gradient of the P2 field at all quadrature points, (nc, nq, 2)."""
        local = c[self.c_dofs]
        # d c / d lambda_j at each point, then chain rule through grad lambda
        dlam = np.einsum("ca,qaj->cqj", local, self.p2_dlam_at_q)
        return np.einsum("cqj,cjd->cqd", dlam, self.grad_lambda)

    def eps_at_quad(self, eps: np.ndarray) -> np.ndarray:
        return eps @ self.qpts.T

    def displacement_gradients(self, u: np.ndarray) -> np.ndarray:
        """Per-cell constant displacement gradient, (nc, 2, 2) with [i, j] = d u_i / d x_j."""
        local = u[self.u_dofs].reshape(-1, 3, 2)
        return np.einsum("cai,caj->cij", local, self.grad_lambda)


def spaces_for(mesh) -> FunctionSpaces:
    """Cached :class:`FunctionSpaces` of ``mesh``.

    The cache lives in the mesh's instance dictionary, so the spaces are
    released together with the mesh. A weak-keyed global table would never
    release them, because the spaces hold a strong reference to their mesh.
    """
    spaces = mesh.__dict__.get("_function_spaces")
    if spaces is None:
        spaces = FunctionSpaces(mesh)
        mesh.__dict__["_function_spaces"] = spaces
    return spaces


@dataclass(frozen=True, eq=False)
class FieldState:
    """Discrete fields of the phase-field problem on one mesh.

    Attributes
    ----------
    u : (2 nv,) displacement, P1.
    c : (nv + ne,) phase field, P2.
    eps : (nc, 3) regularisation length, DG1 vertex values.
    H : (nc, nq) history of the strain energy density at quadrature points.
    """

    u: np.ndarray
    c: np.ndarray
    eps: np.ndarray
    H: np.ndarray

    def replace(self, **changes) -> "FieldState":
        return replace(self, **changes)

    def check(self, mesh, slack: float = 1e-3) -> None:
        s = spaces_for(mesh)
        if self.u.shape != (s.n_u,) or self.c.shape != (s.n_c,):
            raise ValueError("field sizes do not match the mesh")
        if self.eps.shape != (mesh.n_cells, 3) or self.H.shape != (mesh.n_cells, s.n_quad):
            raise ValueError("cell field sizes do not match the mesh")
        if np.any(self.eps <= 0):
            raise ValueError("length field must be positive")
        if np.any(self.H < 0):
            raise ValueError("history field must be non-negative")
        if self.c.min() < -slack or self.c.max() > 1.0 + slack:
            raise ValueError("phase field outside [0, 1] beyond solver slack")

    @classmethod
    def zeros(cls, mesh, eps: float) -> "FieldState":
        s = spaces_for(mesh)
        return cls(u=np.zeros(s.n_u), c=np.zeros(s.n_c),
                   eps=np.full((mesh.n_cells, 3), float(eps)),
                   H=np.zeros((mesh.n_cells, s.n_quad)))


def interpolate_p2(mesh, func) -> np.ndarray:
    """Nodal interpolant of ``func(x, y)`` in the P2 space."""
    xy = spaces_for(mesh).c_node_coords
    return np.asarray(func(xy[:, 0], xy[:, 1]), dtype=float) * np.ones(len(xy))


def interpolate_p1_vector(mesh, func) -> np.ndarray:
    """Nodal interpolant of ``func(x, y) -> (ux, uy)`` in the P1 vector space."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    ux, uy = func(x, y)
    u = np.empty(2 * mesh.n_vertices)
    u[0::2] = ux
    u[1::2] = uy
    return u
