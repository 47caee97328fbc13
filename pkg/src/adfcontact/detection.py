"""Broad-phase bucket grid and narrow-phase containment of incident nodes.

Elements are binned by deformed centroid and exterior nodes by position, on
a uniform grid whose cell size is at least the largest element edge. A node
inside an element lies within one edge length of its centroid, so scanning
the ``3**d`` cells around the node finds every candidate.

Selection rule when several elements contain a node: within one body the
smallest element index wins (node on a shared face); across bodies the
smallest gap wins, then the smallest element index.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .contact import TargetAssignment

__all__ = ["BucketGrid", "DetectionReport", "build_grid", "detect", "brute_force_detect",
           "CONTAINMENT_TOL", "CULL_FACTOR"]

CONTAINMENT_TOL = 1e-12
CULL_FACTOR = 2.0


@dataclass
class BucketGrid:
    """Uniform spatial hash; cell of a point ``p`` is ``floor(p / cell_size)``."""

    cell_size: float
    element_cells: np.ndarray
    node_ids: np.ndarray
    node_cells: np.ndarray
    centroids: np.ndarray
    edge: np.ndarray
    _lo: np.ndarray = field(repr=False)
    _shape: tuple = field(repr=False)
    _sorted_elements: np.ndarray = field(repr=False)
    _sorted_keys: np.ndarray = field(repr=False)

    def _key(self, cells):
        return np.ravel_multi_index(tuple((cells - self._lo).T), self._shape)

    def elements_in(self, cell):
        cell = np.asarray(cell, dtype=np.int64)
        if np.any(cell < self._lo) or np.any(cell - self._lo >= self._shape):
            return np.zeros(0, dtype=np.int64)
        k = self._key(cell[None])[0]
        lo, hi = np.searchsorted(self._sorted_keys, [k, k + 1])
        return np.sort(self._sorted_elements[lo:hi])

    def nodes_in(self, cell):
        cell = np.asarray(cell, dtype=np.int64)
        return self.node_ids[(self.node_cells == cell).all(axis=1)]

    def element_map(self):
        """Dict from cell tuple to sorted element indices."""
        out = {}
        for e, c in enumerate(map(tuple, self.element_cells.tolist())):
            out.setdefault(c, []).append(e)
        return {c: np.array(v, dtype=np.int64) for c, v in out.items()}

    def node_map(self):
        out = {}
        for n, c in zip(self.node_ids.tolist(), map(tuple, self.node_cells.tolist())):
            out.setdefault(c, []).append(n)
        return {c: np.array(v, dtype=np.int64) for c, v in out.items()}


@dataclass
class DetectionReport:
    """Assignments sorted by incident node plus change tracking."""

    assignments: list
    changed: bool = False
    released: list = field(default_factory=list)
    candidates: int = 0

    @property
    def keys(self):
        return [a.key for a in self.assignments]

    def __len__(self):
        return len(self.assignments)


def _cells(points, h):
    return np.floor(points / h).astype(np.int64)


def build_grid(mesh, x, nodes, cell_size=None):
    """Bin all elements and the given exterior ``nodes`` in configuration ``x``."""
    x = np.asarray(x, dtype=float)
    edge = mesh.edge_lengths(x)
    hmax = float(edge.max())
    if cell_size is None:
        cell_size = hmax
    if cell_size < hmax:
        raise ValueError(f"cell size {cell_size} is below the largest edge {hmax}")
    cent = x[mesh.elements].mean(axis=1)
    ecell = _cells(cent, cell_size)
    nodes = np.asarray(nodes, dtype=np.int64)
    ncell = _cells(x[nodes], cell_size)
    allc = np.vstack([ecell, ncell]) if nodes.size else ecell
    lo = allc.min(axis=0) - 1
    shape = tuple(int(v) for v in allc.max(axis=0) - lo + 2)
    grid = BucketGrid(cell_size, ecell, nodes, ncell, cent, edge, lo, shape,
                      np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    keys = grid._key(ecell)
    order = np.argsort(keys, kind="stable")
    grid._sorted_elements = order.astype(np.int64)
    grid._sorted_keys = keys[order]
    return grid


def _ranges(lo, hi):
    """Concatenation of ``arange(lo[i], hi[i])``."""
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), counts
    start = np.repeat(lo - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    return start + np.arange(total), counts


def _select(mesh, x, cand_nodes, cand_elems, phi, sgamma, backend):
    """Containment test on candidate pairs and the deterministic selection rule."""
    if cand_nodes.size == 0:
        return []
    kern = kernels.get_backend(backend)
    conn = mesh.elements[cand_elems]
    N, det = kern.barycentric(x[cand_nodes], x[conn])
    with np.errstate(invalid="ignore"):
        inside = (det != 0.0) & np.all((N >= -CONTAINMENT_TOL) & (N <= 1.0 + CONTAINMENT_TOL), axis=1)
    n, e, N = cand_nodes[inside], cand_elems[inside], N[inside]
    if n.size == 0:
        return []
    if phi is not None:
        ph = np.einsum("ik,ik->i", N, phi[mesh.elements[e]])
        with np.errstate(invalid="ignore", divide="ignore"):
            g = sgamma * np.log(ph)
        g = np.where(np.isnan(g), np.inf, g)
    else:
        g = np.zeros(n.size)
    b = mesh.body[e]
    # smallest element per (node, body)
    order = np.lexsort((e, b, n))
    n, e, b, g, N = n[order], e[order], b[order], g[order], N[order]
    first = np.ones(n.size, dtype=bool)
    first[1:] = (n[1:] != n[:-1]) | (b[1:] != b[:-1])
    n, e, g, N = n[first], e[first], g[first], N[first]
    # smallest gap per node, then smallest element
    order = np.lexsort((e, g, n))
    n, e, g, N = n[order], e[order], g[order], N[order]
    first = np.ones(n.size, dtype=bool)
    first[1:] = n[1:] != n[:-1]
    out = []
    for k in np.nonzero(first)[0]:
        gk = float(g[k]) if phi is not None else float("nan")
        out.append(TargetAssignment(int(n[k]), int(e[k]), tuple(float(v) for v in N[k, 1:]), gk))
    return out


def _report(assignments, previous, candidates):
    prev = set(previous.keys) if previous is not None else set()
    cur = {a.key for a in assignments}
    released = sorted(prev - cur)
    return DetectionReport(assignments, cur != prev, released, candidates)


def detect(mesh, x, grid, previous=None, phi=None, sgamma=1.0, backend=None):
    """Assign every binned node to the element of another body containing it.

    ``phi`` (nodal potentials) is only used to break cross-body ties by gap.
    """
    x = np.asarray(x, dtype=float)
    d = mesh.dim
    nodes = grid.node_ids
    if nodes.size == 0:
        return _report([], previous, 0)
    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)
    cells = grid.node_cells[:, None, :] + offsets[None, :, :]
    keys = grid._key(cells.reshape(-1, d))
    lo = np.searchsorted(grid._sorted_keys, keys, side="left")
    hi = np.searchsorted(grid._sorted_keys, keys, side="right")
    idx, counts = _ranges(lo, hi)
    cand_elems = grid._sorted_elements[idx]
    cand_nodes = np.repeat(np.repeat(nodes, len(offsets)), counts)
    keep = mesh.body[cand_elems] != mesh.node_body[cand_nodes]
    dist = np.linalg.norm(x[cand_nodes] - grid.centroids[cand_elems], axis=1)
    keep &= dist <= CULL_FACTOR * grid.edge[cand_elems]
    cand_nodes, cand_elems = cand_nodes[keep], cand_elems[keep]
    assignments = _select(mesh, x, cand_nodes, cand_elems, phi, sgamma, backend)
    return _report(assignments, previous, int(cand_nodes.size))


def brute_force_detect(mesh, x, nodes, previous=None, phi=None, sgamma=1.0, backend=None, chunk=200000):
    """All-pairs containment oracle with the same selection rule as :func:`detect`."""
    x = np.asarray(x, dtype=float)
    nodes = np.asarray(nodes, dtype=np.int64)
    ne = mesh.n_elements
    pairs_n, pairs_e = [], []
    per = max(1, chunk // max(ne, 1))
    for s in range(0, nodes.size, per):
        nn = nodes[s:s + per]
        cn = np.repeat(nn, ne)
        ce = np.tile(np.arange(ne, dtype=np.int64), nn.size)
        keep = mesh.body[ce] != mesh.node_body[cn]
        pairs_n.append(cn[keep])
        pairs_e.append(ce[keep])
    if pairs_n:
        cand_nodes, cand_elems = np.concatenate(pairs_n), np.concatenate(pairs_e)
    else:
        cand_nodes = cand_elems = np.zeros(0, dtype=np.int64)
    assignments = _select(mesh, x, cand_nodes, cand_elems, phi, sgamma, backend)
    return _report(assignments, previous, int(cand_nodes.size))
