"""Transfer of discrete fields from a mesh to its refinement."""

from __future__ import annotations

import numpy as np

from ..model import EPS_FLOOR
from ..fem.spaces import P2_NODES, FieldState, p2_values, spaces_for
from .refine import _barycentric
from .trimesh import TriMesh


def _locate(coarse: TriMesh, parent: np.ndarray, points: np.ndarray):
    """Barycentric coordinates of ``points`` in their source cell.

    ``parent`` gives a candidate coarse cell per point; points of cells
    rebuilt from a merged green pair may lie in the other half instead.
    """
    tri = coarse.vertices[coarse.cells]
    lam = _barycentric(points, tri[parent])
    cell = parent.copy()
    outside = lam.min(axis=1) < -1e-10
    if outside.any():
        alt = coarse.green_sibling[parent[outside]]
        ok = alt >= 0
        idx = np.flatnonzero(outside)[ok]
        lam_alt = _barycentric(points[idx], tri[alt[ok]])
        better = lam_alt.min(axis=1) > lam[idx].min(axis=1)
        lam[idx[better]] = lam_alt[better]
        cell[idx[better]] = alt[ok][better]
    return cell, lam


def transfer_state(coarse: TriMesh, fine: TriMesh, state: FieldState) -> FieldState:
    """Carry fields onto a mesh produced by ``refine_marked(coarse, ...)``.

    Displacement and phase field are interpolated with the coarse shape
    functions, the length field is evaluated from the coarse cell's linear
    polynomial at the new vertices, and the history takes the value of the
    nearest coarse quadrature point of the containing cell.
    """
    if fine is coarse:
        return state
    if fine.source_id != coarse.mesh_id or fine.parent_of is None:
        raise ValueError("fine mesh was not produced by refining the coarse mesh")
    if len(fine.parent_of) != fine.n_cells or fine.parent_of.max() >= coarse.n_cells:
        raise ValueError("inconsistent refinement genealogy")
    sc, sf = spaces_for(coarse), spaces_for(fine)
    parent = fine.parent_of
    nc_fine = fine.n_cells

    # P2 nodes of every fine cell
    node_xy = np.einsum("ni,cid->cnd", P2_NODES, fine.vertices[fine.cells]).reshape(-1, 2)
    cell, lam = _locate(coarse, np.repeat(parent, 6), node_xy)
    c_vals = np.sum(p2_values(lam) * state.c[sc.c_dofs[cell]], axis=1)
    c_new = np.empty(sf.n_c)
    c_new[sf.c_dofs.ravel()] = c_vals
    c_new[: coarse.n_vertices] = state.c[: coarse.n_vertices]

    # displacement at fine vertices, from the vertex rows of the same lookup
    vert_rows = (np.arange(nc_fine)[:, None] * 6 + np.arange(3)[None, :]).ravel()
    u_local = state.u[sc.u_dofs[cell[vert_rows]]].reshape(-1, 3, 2)
    u_vals = np.einsum("pi,pid->pd", lam[vert_rows], u_local)
    u_new = np.empty(sf.n_u)
    fine_verts = fine.cells.ravel()
    u_new[2 * fine_verts] = u_vals[:, 0]
    u_new[2 * fine_verts + 1] = u_vals[:, 1]
    u_new[: sc.n_u] = state.u

    eps_new = np.einsum("pi,pi->p", lam[vert_rows], state.eps[cell[vert_rows]]).reshape(nc_fine, 3)
    eps_new = np.maximum(eps_new, EPS_FLOOR)

    # history: nearest coarse quadrature point inside the containing cell
    qf = sf.quad_points.reshape(-1, 2)
    nq = sf.n_quad
    qcell, _ = _locate(coarse, np.repeat(parent, nq), qf)
    cand = sc.quad_points[qcell]                                 # (m, nq, 2)
    nearest = np.argmin(np.sum((cand - qf[:, None, :]) ** 2, axis=-1), axis=1)
    h_new = state.H[qcell, nearest].reshape(nc_fine, nq)
    return FieldState(u=u_new, c=c_new, eps=eps_new, H=h_new)
