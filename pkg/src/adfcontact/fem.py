"""Linear simplex interpolation, dof numbering and sparse assembly.

The sparse pattern is explicit: contributions that fall outside it raise
:class:`PatternError`, which is how a missed connectivity update shows up.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "PatternError", "LinearSolveError", "SingularSystemError",
    "ShapeEval", "shape_simplex", "parent_gradients", "shape_eval",
    "reference_gradients", "DofMap", "SparseSystem", "solve_linear",
    "eliminate_dirichlet",
]


class PatternError(IndexError):
    """An assembled entry is not in the current sparsity pattern."""


class LinearSolveError(RuntimeError):
    pass


class SingularSystemError(LinearSolveError):
    pass


def parent_gradients(d):
    """Rows ``dN_K/dxi`` for ``N_1 = 1 - sum(xi)``, ``N_{K+1} = xi_K``."""
    return np.vstack([-np.ones(d), np.eye(d)])


@dataclass
class ShapeEval:
    N: np.ndarray
    dN_dxi: np.ndarray
    j: np.ndarray = None
    det_j: float = None

    @property
    def dN_dx(self):
        return self.dN_dxi @ np.linalg.inv(self.j)


def shape_simplex(xi, d=None):
    """Shape values and parent gradients of the linear simplex at ``xi``."""
    xi = np.asarray(xi, dtype=float)
    if d is None:
        d = xi.shape[-1]
    if d not in (2, 3) or xi.shape[-1] != d:
        raise ValueError(f"parent coordinates must have length 2 or 3, got {xi.shape}")
    N = np.concatenate([[1.0 - xi.sum()], xi])
    return ShapeEval(N, parent_gradients(d))


def shape_eval(xi, x_nodes):
    """Shape evaluation including the Jacobian ``dx/dxi`` of simplex ``x_nodes``."""
    x_nodes = np.asarray(x_nodes, dtype=float)
    ev = shape_simplex(xi, x_nodes.shape[1])
    ev.j = x_nodes.T @ ev.dN_dxi
    ev.det_j = float(np.linalg.det(ev.j))
    return ev


def reference_gradients(x, elements):
    """Constant ``dN/dX`` per element and element measures.

    Returns ``G`` (ne, d+1, d) and ``vol`` (ne,).
    """
    x = np.asarray(x, dtype=float)
    xe = x[elements]
    d = x.shape[1]
    J = np.swapaxes(xe[:, 1:, :] - xe[:, :1, :], 1, 2)
    det = np.linalg.det(J)
    G = np.einsum("kj,eji->eki", parent_gradients(d), np.linalg.inv(J))
    return G, det / (2.0 if d == 2 else 6.0)


class DofMap:
    """Displacement dofs ``node*d + k`` and per-body scalar (phi) dofs.

    The two numberings are independent: the phi system of each body is solved
    separately on that body's nodes.
    """

    def __init__(self, mesh):
        self.dim = mesh.dim
        self.n_nodes = mesh.n_nodes
        self.n_dofs = mesh.n_nodes * mesh.dim
        self.body_nodes = {int(b): mesh.body_nodes(b) for b in mesh.bodies}
        self.phi_index = np.full(mesh.n_nodes, -1, dtype=np.int64)
        for nodes in self.body_nodes.values():
            self.phi_index[nodes] = np.arange(len(nodes))

    def node_dofs(self, nodes):
        nodes = np.asarray(nodes, dtype=np.int64).ravel()
        return (nodes[:, None] * self.dim + np.arange(self.dim)).ravel()

    def element_dofs(self, elements):
        """(ne, (d+1)*d) displacement dofs, node-major."""
        elements = np.asarray(elements, dtype=np.int64)
        return (elements[:, :, None] * self.dim + np.arange(self.dim)).reshape(len(elements), -1)


class SparseSystem:
    """CSR matrix with an explicit pattern plus a right-hand side.

    The pattern is the union of the dof blocks passed to :meth:`rebuild`. Keys
    ``row * n + col`` are kept sorted, so locating an entry is a binary search
    and accumulation uses ``bincount`` in input order, which makes repeated
    assemblies bit-identical.
    """

    def __init__(self, n):
        self.n = int(n)
        self.keys = np.zeros(0, dtype=np.int64)
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        self.indices = np.zeros(0, dtype=np.int64)
        self.data = np.zeros(0)
        self.rhs = np.zeros(self.n)
        self.rebuild_count = 0
        self._cache = {}

    @property
    def nnz(self):
        return self.keys.size

    def rebuild(self, blocks):
        """Recompute the pattern from dof blocks.

        ``blocks`` maps a name (or is a list) of integer arrays of shape
        (n_items, k); every item couples all of its k dofs.
        """
        if isinstance(blocks, dict):
            arrays = list(blocks.values())
        else:
            arrays = list(blocks)
        parts = []
        for dofs in arrays:
            dofs = np.asarray(dofs, dtype=np.int64)
            if dofs.size == 0:
                continue
            dofs = dofs.reshape(len(dofs), -1)
            k = dofs.shape[1]
            rows = np.repeat(dofs, k, axis=1).ravel()
            cols = np.tile(dofs, (1, k)).ravel()
            parts.append(rows * self.n + cols)
        # diagonal always present so eliminated rows stay well defined
        parts.append(np.arange(self.n, dtype=np.int64) * (self.n + 1))
        keys = np.unique(np.concatenate(parts))
        self.keys = keys
        rows = keys // self.n
        self.indices = keys % self.n
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.n), out=self.indptr[1:])
        self.data = np.zeros(keys.size)
        self._cache = {}
        self.rebuild_count += 1

    def locate(self, dofs):
        """Positions in ``data`` of the dense block over ``dofs`` (items, k)."""
        dofs = np.asarray(dofs, dtype=np.int64)
        dofs = dofs.reshape(len(dofs), -1)
        k = dofs.shape[1]
        want = (dofs[:, :, None] * self.n + dofs[:, None, :]).reshape(len(dofs), k * k)
        pos = np.searchsorted(self.keys, want)
        pos_c = np.minimum(pos, max(self.keys.size - 1, 0))
        if self.keys.size == 0 or (self.keys[pos_c] != want).any():
            bad = np.argwhere(self.keys[pos_c] != want) if self.keys.size else np.zeros((1, 2), int)
            item, entry = (int(v) for v in bad[0])
            r, c = divmod(int(want[item, entry]), self.n)
            raise PatternError(f"entry ({r}, {c}) of block item {item} is not in the sparsity pattern; "
                               "rebuild the pattern after a connectivity change")
        return pos

    def zero(self):
        self.data[:] = 0.0
        self.rhs[:] = 0.0

    def add(self, dofs, values, rhs=None, name=None):
        """Accumulate dense blocks ``values`` (items, k, k) over ``dofs`` (items, k)."""
        dofs = np.asarray(dofs, dtype=np.int64)
        if dofs.size == 0:
            return
        dofs = dofs.reshape(len(dofs), -1)
        if name is not None and name in self._cache and self._cache[name][0].shape == dofs.shape \
                and np.array_equal(self._cache[name][0], dofs):
            pos = self._cache[name][1]
        else:
            pos = self.locate(dofs)
            if name is not None:
                self._cache[name] = (dofs.copy(), pos)
        self.data += np.bincount(pos.ravel(), weights=np.asarray(values, dtype=float).ravel(),
                                 minlength=self.data.size)
        if rhs is not None:
            self.rhs += np.bincount(dofs.ravel(), weights=np.asarray(rhs, dtype=float).ravel(),
                                    minlength=self.n)

    def add_diagonal(self, dofs, values):
        dofs = np.asarray(dofs, dtype=np.int64)
        self.add(dofs[:, None], np.broadcast_to(values, dofs.shape)[:, None, None])

    def tocsr(self):
        return sp.csr_matrix((self.data.copy(), self.indices.copy(), self.indptr.copy()),
                             shape=(self.n, self.n))


def eliminate_dirichlet(A, b, fixed, values):
    """Reduce ``A x = b`` to the free dofs with prescribed ``x[fixed] = values``.

    Returns ``(A_ff, b_f, free)``; ``b_f`` carries the ``-A_fd x_d`` correction.
    The reduced operator keeps the symmetry of ``A``.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[np.asarray(fixed, dtype=np.int64)] = False
    free = np.nonzero(mask)[0]
    xd = np.zeros(n)
    xd[np.asarray(fixed, dtype=np.int64)] = values
    rhs = np.asarray(b, dtype=float) - A @ xd
    return A[free][:, free], rhs[free], free


def solve_linear(A, b, rtol=1e-10, pivot_tol=1e-13):
    """Direct sparse solve with a residual check.

    Raises
    ------
    SingularSystemError
        When the LU factorisation hits a (numerically) zero pivot.
    LinearSolveError
        When the relative residual exceeds ``rtol``.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    piv = np.abs(lu.U.diagonal())
    if piv.min() <= pivot_tol * piv.max():
        raise SingularSystemError(
            f"matrix is singular to working precision (pivot ratio {piv.min() / piv.max():.3e})")
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("non-finite solution")
    bn = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b)
    if res > rtol * max(bn, np.finfo(float).tiny):
        # one step of iterative refinement before giving up
        x = x + lu.solve(b - A @ x)
        res = np.linalg.norm(A @ x - b)
        if res > rtol * max(bn, np.finfo(float).tiny):
            raise LinearSolveError(f"relative residual {res / bn:.3e} exceeds {rtol:.1e}")
    return x
