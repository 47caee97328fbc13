"""Node-in-simplex projection and the Courant-Beltrami penalty element.

Node ordering of a contact element is ``[x_1 .. x_{d+1}, x_I]``: the target
simplex followed by the incident node, flattened node-major into the
``(d+2)*d`` vector ``x_C``. The contact potential is

    P(x_C) = -kappa/3 * min(0, g)**3

with the target potentials ``phi_N`` held fixed, so the residual ``dP/dx_C``
pushes the incident node out along ``grad g`` and loads the target nodes with
the opposite reaction.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .fem import parent_gradients

__all__ = [
    "DegenerateTargetError", "ContactParams", "TargetAssignment",
    "ProjectionDerivatives", "project_to_simplex", "projection_derivatives",
    "contact_potential", "contact_element", "evaluate_assignments",
    "tributary_weights", "projected_weights", "target_normals", "weighted_penalty", "WEIGHTINGS",
]

WEIGHTINGS = ("none", "edge_projection")


class DegenerateTargetError(ValueError):
    """The target simplex has zero measure in the current configuration."""


@dataclass(frozen=True)
class ContactParams:
    """Penalty, length scale and gap conventions.

    ``sign = +1`` makes the gap negative inside a body.
    """

    kappa: float
    l_c: float
    sign: int = 1
    weighting: str = "none"
    gap_normalization: str = "sqrt"

    def __post_init__(self):
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.l_c > 0.0:
            raise ValueError(f"l_c must be positive, got {self.l_c}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.gap_normalization not in ("sqrt", "diffusion"):
            raise ValueError(f"gap_normalization must be 'sqrt' or 'diffusion', got {self.gap_normalization!r}")

    @property
    def c_L(self):
        return self.l_c**2


@dataclass(frozen=True)
class TargetAssignment:
    """Incident node ``node`` lies in ``element`` of another body at ``xi``."""

    node: int
    element: int
    xi: tuple
    g: float = float("nan")

    def stacked(self, mesh, x):
        """``x_C`` as a ((d+2), d) array in the current configuration ``x``."""
        return np.vstack([x[mesh.elements[self.element]], x[self.node]])

    @property
    def key(self):
        return (self.node, self.element)


@dataclass
class ProjectionDerivatives:
    """Parent coordinates of the incident node and their derivatives w.r.t. ``x_C``.

    Attributes
    ----------
    a_N : ndarray (d,)
    A_N : ndarray (d, n)
    calA_N : ndarray (d, n, n)
        With ``n = (d+2)*d``.
    """

    a_N: np.ndarray
    A_N: np.ndarray
    calA_N: np.ndarray


def _split(x_C, d=None):
    x_C = np.asarray(x_C, dtype=float)
    if x_C.ndim == 1:
        if d is None:
            d = 2 if x_C.size == 8 else 3
        x_C = x_C.reshape(d + 2, d)
    return x_C[:-1], x_C[-1]


def _inverse_jacobian(xN):
    d = xN.shape[1]
    J = (xN[1:] - xN[0]).T
    det = np.linalg.det(J)
    scale = max(np.abs(J).max(), np.finfo(float).tiny) ** d
    if abs(det) <= 1e-14 * scale:
        raise DegenerateTargetError(f"target simplex is degenerate (det J = {det:.3e})")
    return np.linalg.inv(J)


def project_to_simplex(xN, xI):
    """Parent coordinates ``xi`` with ``x(xi) = xI`` for the simplex ``xN``.

    Shape functions are ``N_1 = 1 - sum(xi)`` and ``N_{K+1} = xi_K``.
    """
    xN = np.asarray(xN, dtype=float)
    B = _inverse_jacobian(xN)
    return B @ (np.asarray(xI, dtype=float) - xN[0])


def projection_derivatives(x_C, d=None):
    """Closed-form first and second derivatives of ``xi(x_C)``."""
    xN, xI = _split(x_C, d)
    d = xN.shape[1]
    B = _inverse_jacobian(xN)
    xi = B @ (xI - xN[0])
    Nt = np.concatenate([[1.0 - xi.sum()], xi, [-1.0]])
    T = np.zeros((d + 2, d))
    T[:d + 1] = parent_gradients(d) @ B
    n = (d + 2) * d
    A = -(Nt[None, :, None] * B[:, None, :]).reshape(d, n)
    # d/dx_(Q,q) of -Nt_P B[i, m]
    cal = (np.einsum("Q,Pq,im->iPmQq", Nt, T, B)
           + np.einsum("P,iq,Qm->iPmQq", Nt, B, T)).reshape(d, n, n)
    return ProjectionDerivatives(xi, A, cal)


def contact_potential(xN, xI, phi_N, kappa, sgamma):
    """``-kappa/3 min(0, g)**3`` with ``g`` interpolated from frozen ``phi_N``."""
    xi = project_to_simplex(xN, xI)
    ph = (1.0 - xi.sum()) * phi_N[0] + xi @ np.asarray(phi_N[1:], dtype=float)
    g = sgamma * np.log(ph)
    return -kappa / 3.0 * min(0.0, g) ** 3


def contact_element(xN, xI, phi_N, kappa, sgamma, backend=None):
    """Gap, residual and stiffness of one contact element.

    Returns ``(g, residual, stiffness)`` over the ``(d+2)*d`` entries of ``x_C``.
    Both vanish when ``g >= 0``.
    """
    xN = np.asarray(xN, dtype=float)
    _inverse_jacobian(xN)
    phi_N = np.asarray(phi_N, dtype=float)
    xi = project_to_simplex(xN, xI)
    ph = (1.0 - xi.sum()) * phi_N[0] + xi @ phi_N[1:]
    if not ph > 0.0:
        from .adf import FieldError
        raise FieldError(f"interpolated potential {ph} is not positive")
    kern = kernels.get_backend(backend)
    g, r, K = kern.contact(xN[None], np.asarray(xI, dtype=float)[None], phi_N[None],
                           np.array([float(kappa)]), float(sgamma))
    return float(g[0]), r[0], K[0]


def evaluate_assignments(assignments, mesh, x, phi, kappa_eff, sgamma, backend=None):
    """Vectorised contact elements for a list of assignments.

    Returns ``(g, r, K, dofs)`` with ``dofs`` (na, (d+2)*d) global displacement dofs.
    """
    d = mesh.dim
    n = (d + 2) * d
    na = len(assignments)
    if na == 0:
        return np.zeros(0), np.zeros((0, n)), np.zeros((0, n, n)), np.zeros((0, n), dtype=np.int64)
    elems = np.array([a.element for a in assignments], dtype=np.int64)
    nodes = np.array([a.node for a in assignments], dtype=np.int64)
    conn = mesh.elements[elems]
    allnodes = np.column_stack([conn, nodes])
    dofs = (allnodes[:, :, None] * d + np.arange(d)).reshape(na, n)
    kern = kernels.get_backend(backend)
    g, r, K = kern.contact(x[conn], x[nodes], phi[conn], np.asarray(kappa_eff, dtype=float), float(sgamma))
    return g, r, K, dofs


def tributary_weights(mesh, boundary, x=None):
    """Boundary measure attributed to every node.

    Half the length of each adjacent exterior edge in 2D, one third of the
    area of each adjacent exterior triangle in 3D. Interior nodes get zero.
    """
    x = mesh.nodes if x is None else np.asarray(x, dtype=float)
    fn = boundary.face_nodes
    w = np.zeros(mesh.n_nodes)
    if fn.size == 0:
        return w
    if mesh.dim == 2:
        meas = np.linalg.norm(x[fn[:, 1]] - x[fn[:, 0]], axis=1)
    else:
        meas = 0.5 * np.linalg.norm(np.cross(x[fn[:, 1]] - x[fn[:, 0]], x[fn[:, 2]] - x[fn[:, 0]]), axis=1)
    k = fn.shape[1]
    np.add.at(w, fn.ravel(), np.repeat(meas / k, k))
    return w


def target_normals(mesh, x, elements, phi):
    """Unit ``grad(phi)`` direction inside each target element."""
    conn = mesh.elements[np.asarray(elements, dtype=np.int64)]
    xe = np.asarray(x, dtype=float)[conn]
    d = xe.shape[2]
    J = np.swapaxes(xe[:, 1:, :] - xe[:, :1, :], 1, 2)
    w = np.einsum("kj,ek->ej", parent_gradients(d), phi[conn])
    grad = np.linalg.solve(np.swapaxes(J, 1, 2), w[..., None])[..., 0]
    norm = np.linalg.norm(grad, axis=1, keepdims=True)
    return grad / np.where(norm > 0.0, norm, 1.0)


def projected_weights(mesh, boundary, x, nodes, normals):
    """Tributary boundary measure of ``nodes`` projected normal to ``normals``.

    Each exterior face adjacent to a node contributes its measure projected on
    the plane orthogonal to that node's contact normal, split evenly among the
    face's nodes. On a flat interface this is the plain tributary measure,
    while faces running along the normal (the sides of a block) drop out.
    """
    x = np.asarray(x, dtype=float)
    nodes = np.asarray(nodes, dtype=np.int64)
    normals = np.asarray(normals, dtype=float)
    fn = boundary.face_nodes
    k = fn.shape[1]
    if mesh.dim == 2:
        e = x[fn[:, 1]] - x[fn[:, 0]]
        # rotate edges so that |a . n| is the projected length
        area = np.column_stack([-e[:, 1], e[:, 0]])
    else:
        area = 0.5 * np.cross(x[fn[:, 1]] - x[fn[:, 0]], x[fn[:, 2]] - x[fn[:, 0]])
    flat = fn.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_nodes = flat[order]
    lo = np.searchsorted(sorted_nodes, nodes, side="left")
    hi = np.searchsorted(sorted_nodes, nodes, side="right")
    w = np.zeros(nodes.size)
    for i in range(nodes.size):
        faces = order[lo[i]:hi[i]] // k
        w[i] = np.abs(area[faces] @ normals[i]).sum() / k
    return w


def weighted_penalty(node, params, weights):
    """Effective penalty of incident ``node``.

    ``weights`` comes from :func:`tributary_weights`; it is only consulted for
    the ``edge_projection`` weighting.
    """
    if params.weighting == "none":
        return params.kappa
    w = float(weights[node])
    if not w > 0.0:
        raise ValueError(f"node {node} has no exterior faces and cannot carry a weighted penalty")
    return params.kappa * w
