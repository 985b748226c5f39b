"""Conforming triangular meshes with tagged edges."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

SIDE_TAGS = ("top", "bottom", "left", "right")

_mesh_ids = itertools.count()

# local edge k of a cell joins local vertices LOCAL_EDGES[k]
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


KEY_BASE = 1 << 32


def edge_keys(pairs: np.ndarray) -> np.ndarray:
    """Order-independent int64 keys for vertex pairs of shape (m, 2)."""
    pairs = np.asarray(pairs, dtype=np.int64)
    lo = np.minimum(pairs[..., 0], pairs[..., 1])
    hi = np.maximum(pairs[..., 0], pairs[..., 1])
    return lo * np.int64(KEY_BASE) + hi


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable conforming triangulation.

    Parameters
    ----------
    vertices : (nv, 2) array
        Vertex coordinates in mm.
    cells : (nc, 3) int array
        Counter-clockwise vertex triples.
    boundary_edges : (nb, 2) int array
        Every edge on the domain boundary, one row each.
    boundary_tags : (nb,) str array
        Side tag of each boundary edge.
    interior_edges, interior_tags
        Optional tagged interior edges (e.g. the phase-field pre-crack).
    parent_of : (nc,) int array or None
        For meshes produced by refinement, the index of the cell of the
        source mesh containing each cell (unchanged cells map to their
        previous index).
    green_sibling : (nc,) int array
        Index of the other half of a green (bisected) pair, or -1.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    interior_edges: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    interior_tags: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype="<U8"))
    parent_of: Optional[np.ndarray] = None
    green_sibling: Optional[np.ndarray] = None
    source_id: Optional[int] = None
    mesh_id: int = field(default_factory=lambda: next(_mesh_ids))

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        c = np.ascontiguousarray(self.cells, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must have shape (nv, 2)")
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValueError("cells must have shape (nc, 3)")
        if c.size and (c.min() < 0 or c.max() >= len(v)):
            raise ValueError("cell vertex index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cells", c)
        object.__setattr__(self, "boundary_edges",
                           np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", np.asarray(self.boundary_tags, dtype="<U8"))
        object.__setattr__(self, "interior_edges",
                           np.asarray(self.interior_edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "interior_tags", np.asarray(self.interior_tags, dtype="<U8"))
        if self.green_sibling is None:
            object.__setattr__(self, "green_sibling", np.full(len(c), -1, dtype=np.int64))
        if len(self.boundary_edges) != len(self.boundary_tags):
            raise ValueError("one tag per boundary edge required")
        if len(self.interior_edges) != len(self.interior_tags):
            raise ValueError("one tag per interior edge required")
        if len(c):
            bad = np.flatnonzero(self.signed_areas <= 1e-12 * self.cell_sizes**2)
            if bad.size:
                raise ValueError(f"degenerate or inverted cells: {bad[:10].tolist()}")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """(nc, 3) lengths of local edges (0,1), (1,2), (2,0)."""
        p = self.vertices[self.cells]
        return np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)

    @cached_property
    def cell_sizes(self) -> np.ndarray:
        """Longest edge of every cell."""
        return self.edge_lengths.max(axis=1)

    @cached_property
    def _edge_data(self):
        pairs = self.cells[:, LOCAL_EDGES].reshape(-1, 2)
        keys = edge_keys(pairs)
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        edges = np.sort(pairs[first], axis=1)
        return uniq, edges, inverse.reshape(-1, 3)

    @property
    def edges(self) -> np.ndarray:
        """(ne, 2) unique edges, sorted vertex pairs, ordered by key."""
        return self._edge_data[1]

    @property
    def cell_edges(self) -> np.ndarray:
        """(nc, 3) edge index of each local edge."""
        return self._edge_data[2]

    @property
    def n_edges(self) -> int:
        return len(self._edge_data[0])

    def edge_index(self, pairs: np.ndarray) -> np.ndarray:
        """Edge ids of vertex pairs; -1 where the pair is not an edge."""
        uniq = self._edge_data[0]
        keys = edge_keys(np.asarray(pairs).reshape(-1, 2))
        pos = np.searchsorted(uniq, keys)
        pos = np.minimum(pos, len(uniq) - 1)
        return np.where(uniq[pos] == keys, pos, -1)

    @cached_property
    def edge_cell_count(self) -> np.ndarray:
        return np.bincount(self.cell_edges.ravel(), minlength=self.n_edges)

    def tagged_edges(self, tag: str) -> np.ndarray:
        """Vertex pairs carrying ``tag`` (boundary or interior)."""
        b = self.boundary_edges[self.boundary_tags == tag]
        i = self.interior_edges[self.interior_tags == tag]
        return np.concatenate([b, i])

    def tagged_vertices(self, tag: str) -> np.ndarray:
        return np.unique(self.tagged_edges(tag))

    @property
    def tags(self) -> set:
        return set(self.boundary_tags.tolist()) | set(self.interior_tags.tolist())

    def check_conforming(self) -> None:
        """Raise ``ValueError`` unless the mesh satisfies all invariants."""
        if np.any(self.signed_areas <= 0):
            raise ValueError("inverted cell")
        counts = self.edge_cell_count
        if np.any(counts > 2):
            raise ValueError("edge shared by more than two cells")
        boundary = np.flatnonzero(counts == 1)
        tagged = self.edge_index(self.boundary_edges)
        if np.any(tagged < 0):
            raise ValueError("tagged boundary edge is not a mesh edge")
        if set(tagged.tolist()) != set(boundary.tolist()) or len(tagged) != len(boundary):
            raise ValueError("boundary tags do not cover exactly the boundary edges")
        if len(self.interior_edges):
            inner = self.edge_index(self.interior_edges)
            if np.any(inner < 0) or np.any(counts[inner] != 2):
                raise ValueError("interior tag on a non-interior edge")
        if hanging_nodes(self).size:
            raise ValueError("hanging nodes present")


def hanging_nodes(mesh: TriMesh) -> np.ndarray:
    """Vertices lying strictly inside an edge they are not an endpoint of."""
    # A hanging vertex sits at the midpoint-or-elsewhere of a boundary-count edge;
    # for refinement-produced meshes checking midpoints of single-cell edges suffices.
    counts = mesh.edge_cell_count
    single = mesh.edges[counts == 1]
    if not len(single):
        return np.zeros(0, dtype=np.int64)
    mids = mesh.vertices[single].mean(axis=1)
    scale = mesh.cell_sizes.min()
    tree = cKDTree(mesh.vertices)
    dist, idx = tree.query(mids)
    return np.unique(idx[dist < 1e-9 * scale])


@dataclass(frozen=True)
class CellMetrics:
    h_e: float
    min_angle: float
    aspect_ratio: float


def cell_metrics(mesh: TriMesh, cell: int) -> CellMetrics:
    """Longest edge, smallest angle (degrees) and normalised aspect ratio.

    The aspect ratio is ``h_e / (2 sqrt(3) r_in)`` which equals 1 for an
    equilateral triangle and grows without bound as the cell degenerates.
    """
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell {cell} out of range for mesh with {mesh.n_cells} cells")
    lengths = mesh.edge_lengths[cell]
    a, b, c = lengths[1], lengths[2], lengths[0]  # opposite vertices 0, 1, 2
    angles = _angles_from_sides(a, b, c)
    area = mesh.signed_areas[cell]
    r_in = 2.0 * area / lengths.sum()
    h_e = float(lengths.max())
    return CellMetrics(h_e=h_e, min_angle=float(min(angles)),
                       aspect_ratio=float(h_e / (2.0 * math.sqrt(3.0) * r_in)))


def _angles_from_sides(a, b, c):
    def angle(opp, s1, s2):
        cos = (s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)
        return math.degrees(math.acos(min(1.0, max(-1.0, cos))))

    return angle(a, b, c), angle(b, c, a), angle(c, a, b)


def min_angles(mesh: TriMesh) -> np.ndarray:
    """Smallest interior angle (degrees) of every cell."""
    p = mesh.vertices[mesh.cells]
    out = np.full(mesh.n_cells, 180.0)
    for i in range(3):
        e1 = p[:, (i + 1) % 3] - p[:, i]
        e2 = p[:, (i + 2) % 3] - p[:, i]
        cos = np.einsum("ij,ij->i", e1, e2) / (
            np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1))
        out = np.minimum(out, np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
    return out


def build_rectangle_mesh(width: float, height: float, h: float,
                         origin: tuple[float, float] = (0.0, 0.0)) -> TriMesh:
    """Structured crossed-diagonal mesh of a rectangle.

    Each grid square is split into four right triangles by its diagonals, so
    every cell's longest edge is a grid line. The number of squares per side
    is even and chosen so that the grid spacing does not exceed ``h``; the
    horizontal and vertical mid-lines are therefore made of mesh edges.
    """
    if not (width > 0 and height > 0 and h > 0):
        raise ValueError("width, height and h must be positive")
    nx = 2 * max(1, math.ceil(width / (2.0 * h) - 1e-12))
    ny = 2 * max(1, math.ceil(height / (2.0 * h) - 1e-12))
    x0, y0 = origin
    xs = x0 + width * np.arange(nx + 1) / nx
    ys = y0 + height * np.arange(ny + 1) / ny
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    cx, cy = np.meshgrid(0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:]), indexing="xy")
    centres = np.column_stack([cx.ravel(), cy.ravel()])
    vertices = np.vstack([grid, centres])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    ctr = (nx + 1) * (ny + 1) + j * nx + i
    cells = np.stack([
        np.column_stack([v00, v10, ctr]),
        np.column_stack([v10, v11, ctr]),
        np.column_stack([v11, v01, ctr]),
        np.column_stack([v01, v00, ctr]),
    ], axis=1).reshape(-1, 3)

    def row(k):
        return k * (nx + 1) + np.arange(nx + 1)

    def col(k):
        return np.arange(ny + 1) * (nx + 1) + k

    edges, tags = [], []
    for tag, chain in (("bottom", row(0)), ("top", row(ny)),
                       ("left", col(0)), ("right", col(nx))):
        edges.append(np.column_stack([chain[:-1], chain[1:]]))
        tags += [tag] * (len(chain) - 1)
    return TriMesh(vertices=vertices, cells=cells,
                   boundary_edges=np.sort(np.vstack(edges), axis=1),
                   boundary_tags=np.array(tags))


def tag_interior_segment(mesh: TriMesh, start, end, tag: str, tol: float = 1e-10) -> TriMesh:
    """Return a copy of ``mesh`` whose interior edges on a segment carry ``tag``.

    Only edges with both endpoints on the closed segment are tagged.
    """
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    d = b - a
    length = np.linalg.norm(d)
    rel = mesh.vertices - a
    t = rel @ d / length**2
    dist = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / length
    on = (dist <= tol * max(length, 1.0)) & (t >= -tol) & (t <= 1.0 + tol)
    edges = mesh.edges
    inner = (mesh.edge_cell_count == 2) & on[edges[:, 0]] & on[edges[:, 1]]
    new = edges[inner]
    return TriMesh(vertices=mesh.vertices, cells=mesh.cells,
                   boundary_edges=mesh.boundary_edges, boundary_tags=mesh.boundary_tags,
                   interior_edges=np.vstack([mesh.interior_edges, new]),
                   interior_tags=np.concatenate([mesh.interior_tags, [tag] * len(new)]),
                   parent_of=mesh.parent_of, green_sibling=mesh.green_sibling,
                   source_id=mesh.source_id)
