"""Red-green refinement of marked cells.

Marked cells are split 1-to-4 through their edge midpoints (red). Closure
is restored by splitting any cell with two or more refined edges red as
well, and bisecting cells with exactly one refined edge (green). A green
pair is never bisected again: if either half is marked or touches a refined
edge, the pair is merged back into its parent, which is then split red.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .trimesh import KEY_BASE, LOCAL_EDGES, TriMesh, edge_keys


def _barycentric(points, tri):
    """Barycentric coordinates of points (m, 2) in triangles (m, 3, 2)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    v0, v1, v2 = b - a, c - a, points - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


class _Work:
    """Mutable working set used while closing a refinement."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.nv = mesh.n_vertices
        self.cells = mesh.cells.copy()
        self.sib = mesh.green_sibling.copy()
        self.origin = np.arange(mesh.n_cells)
        self.alt = np.full(mesh.n_cells, -1)
        self.red = np.zeros(mesh.n_cells, dtype=bool)
        self.coords: list[np.ndarray] = []
        self.known_mid: dict[int, int] = {}

    def key(self, a, b) -> int:
        lo, hi = (a, b) if a < b else (b, a)
        return int(lo) * KEY_BASE + int(hi)

    def point(self, v) -> np.ndarray:
        return self.mesh.vertices[v] if v < self.nv else self.coords[v - self.nv]

    def midpoint(self, a, b) -> int:
        k = self.key(a, b)
        m = self.known_mid.get(k)
        if m is None:
            self.coords.append(0.5 * (self.point(a) + self.point(b)))
            m = self.nv + len(self.coords) - 1
            self.known_mid[k] = m
        return m

    def merge_green_pairs(self, greens: np.ndarray) -> None:
        """Replace each green pair by the four red children of its parent."""
        cells, sib = self.cells, self.sib
        partner = sib[greens]
        pairs = np.unique(np.column_stack([np.minimum(greens, partner),
                                           np.maximum(greens, partner)]), axis=0)
        children, origin, alt = [], [], []
        for i, j in pairs:
            one, two = cells[i], cells[j]
            if one[2] != two[1]:  # halves are stored as (a, b, m) and (a, m, c)
                i, j, one, two = j, i, two, one
            if one[2] != two[1] or one[0] != two[0]:
                raise RuntimeError("corrupt green pair bookkeeping")
            a, b, m, c = one[0], one[1], one[2], two[2]
            self.known_mid[self.key(b, c)] = m
            mab = self.midpoint(a, b)
            mca = self.midpoint(c, a)
            children += [(a, mab, mca), (mab, b, m), (mca, m, c), (mab, m, mca)]
            origin += [self.origin[i]] * 4
            alt += [self.origin[j]] * 4
        keep = np.ones(len(cells), dtype=bool)
        keep[pairs.ravel()] = False
        new_index = np.cumsum(keep) - 1
        sib_keep = sib[keep]
        sib_keep = np.where(sib_keep >= 0, new_index[np.maximum(sib_keep, 0)], -1)
        n_new = len(children)
        self.cells = np.vstack([cells[keep], np.array(children, dtype=np.int64)])
        self.sib = np.concatenate([sib_keep, np.full(n_new, -1)])
        self.origin = np.concatenate([self.origin[keep], origin])
        self.alt = np.concatenate([self.alt[keep], alt])
        self.red = np.concatenate([self.red[keep], np.zeros(n_new, dtype=bool)])


def refine_marked(mesh: TriMesh, marked: Iterable[int]) -> TriMesh:
    """Refine ``marked`` cells red and close the mesh with red-green rules.

    Returns ``mesh`` itself when nothing is marked. The returned mesh
    records, in ``parent_of``, the cell of ``mesh`` that contains each new
    cell.
    """
    marked = np.unique(np.fromiter((int(k) for k in marked), dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.n_cells:
        raise IndexError("marked cell index out of range")

    w = _Work(mesh)
    w.red[marked] = True
    while True:
        greens = np.flatnonzero(w.red & (w.sib >= 0))
        if greens.size:
            w.merge_green_pairs(greens)
        keys = edge_keys(w.cells[:, LOCAL_EDGES].reshape(-1, 2))
        uniq, inverse = np.unique(keys, return_inverse=True)
        inverse = inverse.reshape(-1, 3)
        split = np.zeros(len(uniq), dtype=bool)
        split[inverse[w.red].ravel()] = True
        if w.known_mid:
            forced = np.fromiter(w.known_mid.keys(), dtype=np.int64)
            pos = np.minimum(np.searchsorted(uniq, forced), len(uniq) - 1)
            split[pos[uniq[pos] == forced]] = True
        n_split = split[inverse].sum(axis=1)
        grow = ~w.red & ((n_split >= 2) | ((w.sib >= 0) & (n_split >= 1)))
        if not grow.any():
            break
        w.red |= grow

    cells, red = w.cells, w.red
    mid_vertex = np.full(len(uniq), -1, dtype=np.int64)
    for e in np.flatnonzero(split):
        lo, hi = divmod(int(uniq[e]), KEY_BASE)
        mid_vertex[e] = w.midpoint(lo, hi)
    vertices = np.vstack([mesh.vertices, np.array(w.coords).reshape(-1, 2)])

    keep = ~red & (n_split == 0)
    kept_idx = np.flatnonzero(keep)

    r = np.flatnonzero(red)
    v = cells[r]
    m01, m12, m20 = (mid_vertex[inverse[r, k]] for k in range(3))
    red_children = np.stack([
        np.column_stack([v[:, 0], m01, m20]),
        np.column_stack([m01, v[:, 1], m12]),
        np.column_stack([m20, m12, v[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)

    g = np.flatnonzero(~red & (n_split == 1))
    k = np.argmax(split[inverse[g]], axis=1)
    gv = cells[g]
    rows = np.arange(len(g))
    b = gv[rows, k]
    c = gv[rows, (k + 1) % 3]
    a = gv[rows, (k + 2) % 3]
    m = mid_vertex[inverse[g, k]]
    green_children = np.stack([np.column_stack([a, b, m]),
                               np.column_stack([a, m, c])], axis=1).reshape(-1, 3)

    new_cells = np.vstack([cells[keep], red_children, green_children])
    parent = np.concatenate([w.origin[keep], np.repeat(w.origin[r], 4), np.repeat(w.origin[g], 2)])
    second = np.concatenate([w.alt[keep], np.repeat(w.alt[r], 4), np.repeat(w.alt[g], 2)])

    n_kept = len(kept_idx)
    remap = np.full(len(cells), -1)
    remap[kept_idx] = np.arange(n_kept)
    sibling = np.full(len(new_cells), -1)
    old = w.sib[keep]
    sibling[:n_kept] = np.where(old >= 0, remap[np.maximum(old, 0)], -1)
    pair_idx = n_kept + len(red_children) + 2 * np.arange(len(g))
    sibling[pair_idx] = pair_idx + 1
    sibling[pair_idx + 1] = pair_idx

    # cells from a merged green pair: pick whichever source half holds the centroid
    straddle = np.flatnonzero(second >= 0)
    if straddle.size:
        centroids = vertices[new_cells[straddle]].mean(axis=1)
        lam = _barycentric(centroids, mesh.vertices[mesh.cells[parent[straddle]]])
        outside = lam.min(axis=1) < -1e-12
        parent[straddle[outside]] = second[straddle[outside]]

    split_keys = np.fromiter(w.known_mid.keys(), dtype=np.int64)
    split_mids = np.fromiter(w.known_mid.values(), dtype=np.int64)
    order = np.argsort(split_keys)
    split_keys, split_mids = split_keys[order], split_mids[order]

    def split_tagged(edges, tags):
        if not len(edges) or not len(split_keys):
            return edges, tags
        keys = edge_keys(edges)
        pos = np.minimum(np.searchsorted(split_keys, keys), len(split_keys) - 1)
        hit = split_keys[pos] == keys
        mids = split_mids[pos[hit]]
        halves = np.vstack([np.column_stack([edges[hit, 0], mids]),
                            np.column_stack([mids, edges[hit, 1]])])
        new_edges = np.vstack([edges[~hit], halves])
        new_tags = np.concatenate([tags[~hit], tags[hit], tags[hit]])
        return np.sort(new_edges, axis=1), new_tags

    b_edges, b_tags = split_tagged(mesh.boundary_edges, mesh.boundary_tags)
    i_edges, i_tags = split_tagged(mesh.interior_edges, mesh.interior_tags)
    return TriMesh(vertices=vertices, cells=new_cells,
                   boundary_edges=b_edges, boundary_tags=b_tags,
                   interior_edges=i_edges, interior_tags=i_tags,
                   parent_of=parent, green_sibling=sibling,
                   source_id=mesh.mesh_id)


def refine_uniform(mesh: TriMesh, times: int = 1) -> TriMesh:
    for _ in range(times):
        mesh = refine_marked(mesh, range(mesh.n_cells))
    return mesh
