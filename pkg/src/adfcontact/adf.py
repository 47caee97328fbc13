"""Approximate distance functions from the screened Poisson equation.

For each body we solve ``c_L lap(phi) - phi = 0`` with ``phi = 1`` on the
boundary, on the current configuration, and turn ``phi`` into a signed gap::

    g = sign * gamma * log(phi)

``gamma`` is ``l_c = sqrt(c_L)`` by default (exact distance for a half space)
or ``c_L`` when ``normalization="diffusion"``. With ``sign = +1`` the gap is
negative inside a body.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .fem import SparseSystem, eliminate_dirichlet, parent_gradients, solve_linear
from .mesh import DegenerateElementError, extract_boundary

__all__ = [
    "FieldError", "ResolutionWarning", "PhiBoundsWarning", "NORMALIZATIONS",
    "ScalarField", "GapEval", "gap_scale", "assemble_screened_poisson",
    "solve_field", "eval_gap", "nodal_gap", "varadhan_limit_check",
    "strip_problem", "disk_problem",
]

NORMALIZATIONS = ("sqrt", "diffusion")


class FieldError(ValueError):
    """The interpolated potential is not positive where a gap is requested."""


class ResolutionWarning(UserWarning):
    """The length scale is below the mesh size."""


class PhiBoundsWarning(UserWarning):
    """Nodal potential outside ``(0, 1]`` beyond round-off."""


def gap_scale(c_L, normalization="sqrt"):
    if normalization == "sqrt":
        return math.sqrt(c_L)
    if normalization == "diffusion":
        return float(c_L)
    raise ValueError(f"gap normalization must be one of {NORMALIZATIONS}, got {normalization!r}")


@dataclass
class ScalarField:
    """Nodal screened Poisson solution of every body.

    ``phi`` is indexed by global node; ``x`` is the configuration it was solved on.
    """

    phi: np.ndarray
    c_L: float
    sign: int = 1
    normalization: str = "sqrt"
    x: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if not self.c_L > 0.0:
            raise ValueError("c_L must be positive")
        gap_scale(self.c_L, self.normalization)

    @property
    def l_c(self):
        return math.sqrt(self.c_L)

    @property
    def gamma(self):
        return gap_scale(self.c_L, self.normalization)

    @property
    def sgamma(self):
        return self.sign * self.gamma


@dataclass
class GapEval:
    g: float
    grad_g: np.ndarray
    hess_g: np.ndarray

    @property
    def normal(self):
        n = np.linalg.norm(self.grad_g)
        return self.grad_g / n if n > 0.0 else np.zeros_like(self.grad_g)


def assemble_screened_poisson(mesh, x, body, c_L, backend=None):
    """Screened Poisson operator of ``body`` on coordinates ``x``.

    Rows are numbered by position in ``mesh.body_nodes(body)``; the right-hand
    side is zero.
    """
    nodes = mesh.body_nodes(body)
    local = np.full(mesh.n_nodes, -1, dtype=np.int64)
    local[nodes] = np.arange(nodes.size)
    conn = mesh.elements[mesh.body_elements(body)]
    kern = kernels.get_backend(backend)
    Ke, vol = kern.screened_poisson(np.asarray(x, dtype=float)[conn], float(c_L))
    bad = np.nonzero(vol <= 0.0)[0]
    if bad.size:
        raise DegenerateElementError(int(mesh.body_elements(body)[bad[0]]), float(vol[bad[0]]))
    dofs = local[conn]
    system = SparseSystem(nodes.size)
    system.rebuild([dofs])
    system.add(dofs, Ke)
    return system


def solve_field(mesh, x=None, c_L=None, l_c=None, sign=1, normalization="sqrt",
                boundary=None, bodies=None, backend=None):
    """Solve for ``phi`` on every body (or ``bodies``) in configuration ``x``.

    Parameters
    ----------
    boundary : dict, optional
        Body id to the nodes where ``phi = 1``. Defaults to each body's
        exterior nodes.
    """
    if (c_L is None) == (l_c is None):
        raise ValueError("give exactly one of c_L or l_c")
    if c_L is None:
        c_L = float(l_c) ** 2
    if not c_L > 0.0:
        raise ValueError("c_L must be positive")
    x = mesh.nodes if x is None else np.asarray(x, dtype=float)
    if boundary is None:
        boundary = extract_boundary(mesh).exterior_nodes
    if bodies is None:
        bodies = [int(b) for b in mesh.bodies]
    phi = np.full(mesh.n_nodes, np.nan)
    for b in bodies:
        nodes = mesh.body_nodes(b)
        fixed_global = np.asarray(boundary.get(b, []), dtype=np.int64)
        if fixed_global.size == 0:
            raise ValueError(f"body {b} has no boundary nodes for the potential")
        local = np.searchsorted(nodes, fixed_global)
        system = assemble_screened_poisson(mesh, x, b, c_L, backend)
        A_ff, b_f, free = eliminate_dirichlet(system.tocsr(), system.rhs, local, 1.0)
        sol = np.ones(nodes.size)
        sol[free] = solve_linear(A_ff, b_f)
        phi[nodes] = sol
    solved = phi[~np.isnan(phi)]
    if solved.size and (solved.min() <= 0.0 or solved.max() > 1.0 + 1e-9):
        warnings.warn(f"potential outside (0, 1]: range [{solved.min():.3e}, {solved.max():.12g}]",
                      PhiBoundsWarning, stacklevel=2)
    return ScalarField(phi, float(c_L), sign, normalization, x.copy())


def nodal_gap(field):
    """``g`` at every node; nodes of unsolved bodies are ``nan``."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return field.sgamma * np.log(field.phi)


def eval_gap(field, mesh, element, xi, x=None):
    """Gap, gradient and Hessian at parent coordinates ``xi`` of ``element``.

    The geometry defaults to the configuration the field was solved on.
    """
    x = field.x if x is None else x
    conn = mesh.elements[element]
    xe = np.asarray(x, dtype=float)[conn]
    d = xe.shape[1]
    xi = np.asarray(xi, dtype=float)
    N = np.concatenate([[1.0 - xi.sum()], xi])
    phi_e = field.phi[conn]
    ph = float(N @ phi_e)
    if not ph > 0.0:
        raise FieldError(f"interpolated potential {ph} is not positive in element {element}")
    J = (xe[1:] - xe[0]).T
    grad_phi = np.linalg.solve(J.T, parent_gradients(d).T @ phi_e)
    s = field.sgamma
    return GapEval(s * math.log(ph), s / ph * grad_phi, -s / ph**2 * np.outer(grad_phi, grad_phi))


def varadhan_limit_check(mesh, boundary_nodes, lc_values, exact_distance, sample=None,
                         normalization="sqrt", h=None):
    """Maximum nodal ``|(-g) - d_exact|`` for each length scale.

    Parameters
    ----------
    mesh : Mesh
        Single-body mesh.
    boundary_nodes : array of int
        Nodes with ``phi = 1``.
    exact_distance : ndarray (N,)
        Reference distance at every node.
    sample : ndarray of bool, optional
        Nodes included in the error; defaults to all.
    h : float, optional
        Mesh size; length scales below it are flagged and warned about.

    Returns
    -------
    list of dict
        One row per length scale with keys ``l_c``, ``max_error`` and ``below_mesh``.
    """
    body = int(mesh.bodies[0])
    sample = np.ones(mesh.n_nodes, dtype=bool) if sample is None else np.asarray(sample, dtype=bool)
    rows = []
    for lc in lc_values:
        below = h is not None and lc < h
        if below:
            warnings.warn(f"l_c = {lc} is below the mesh size {h}; expect a resolution floor",
                          ResolutionWarning, stacklevel=2)
        fld = solve_field(mesh, l_c=lc, normalization=normalization,
                          boundary={body: np.asarray(boundary_nodes, dtype=np.int64)})
        err = np.abs(-nodal_gap(fld)[sample] - exact_distance[sample])
        rows.append({"l_c": float(lc), "max_error": float(err.max()), "below_mesh": bool(below)})
    return rows


def strip_problem(h=0.01, length=2.0, width=0.2, window=(0.1, 1.0)):
    """Half-space emulation: ``phi = 1`` on ``x = 0`` only; distance is ``x``.

    Returns ``(mesh, boundary_nodes, exact, sample)``.
    """
    from .generators import strip
    from .mesh import Mesh
    nodes, tri = strip(length, width, h)
    mesh = Mesh(nodes, tri, np.zeros(len(tri), dtype=np.int64))
    xs = mesh.nodes[:, 0]
    bnd = np.nonzero(np.isclose(xs, 0.0, atol=1e-12))[0]
    sample = (xs >= window[0] - 1e-12) & (xs <= window[1] + 1e-12)
    return mesh, bnd, xs.copy(), sample


def disk_problem(h=0.005, radius=1.0):
    """Disk with ``phi = 1`` on the whole rim; distance is ``R - r``.

    Returns ``(mesh, boundary_nodes, exact, sample)``.
    """
    from .generators import disk
    from .mesh import Mesh
    nodes, tri = disk(radius, h)
    mesh = Mesh(nodes, tri, np.zeros(len(tri), dtype=np.int64))
    bnd = extract_boundary(mesh).exterior_nodes[0]
    exact = radius - np.linalg.norm(mesh.nodes, axis=1)
    return mesh, bnd, exact, np.ones(mesh.n_nodes, dtype=bool)
