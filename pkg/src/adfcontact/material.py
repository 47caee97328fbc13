"""Compressible Neo-Hookean law and the total-Lagrangian simplex element.

Strain energy per unit reference volume::

    psi(C) = mu/2 (tr C - 3) - mu ln J + chi/2 (ln J)^2,   J = sqrt(det C)

with ``mu = E / (2 (1 + nu))`` and ``chi = E nu / ((1 + nu)(1 - 2 nu))``.
Two-dimensional problems are plane strain: ``C`` is embedded in 3x3 with
``C33 = 1``.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .fem import reference_gradients

__all__ = [
    "MaterialError", "InvertedElementError", "MaterialParams",
    "strain_energy", "stress_and_tangent", "element_residual_stiffness",
    "ContinuumModel",
]


class MaterialError(ValueError):
    pass


class InvertedElementError(RuntimeError):
    """An element reached ``det F <= 0``; the current step must be cut."""

    def __init__(self, elements, detF):
        self.elements = np.asarray(elements)
        self.detF = np.asarray(detF)
        super().__init__(f"{self.elements.size} inverted element(s), first {int(self.elements.flat[0])} "
                         f"with det F = {float(self.detF.flat[0]):.3e}")


@dataclass(frozen=True)
class MaterialParams:
    E: float
    nu: float

    def __post_init__(self):
        if not self.E > 0.0:
            raise MaterialError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise MaterialError(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")

    @property
    def mu(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def chi(self):
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))


def _embed(C):
    C = np.asarray(C, dtype=float)
    if C.shape == (3, 3):
        return C
    if C.shape == (2, 2):
        out = np.eye(3)
        out[:2, :2] = C
        return out
    raise MaterialError(f"C must be 2x2 or 3x3, got {C.shape}")


def _check_spd(C):
    if not np.allclose(C, C.T, rtol=1e-12, atol=1e-14):
        raise MaterialError("C is not symmetric")
    try:
        np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        raise MaterialError("C is not positive definite") from None


def strain_energy(C, params):
    C3 = _embed(C)
    _check_spd(C3)
    lnJ = 0.5 * np.log(np.linalg.det(C3))
    mu, chi = params.mu, params.chi
    return 0.5 * mu * (np.trace(C3) - 3.0) - mu * lnJ + 0.5 * chi * lnJ**2


def stress_and_tangent(C, params):
    """Second Piola-Kirchhoff stress ``S = 2 dpsi/dC`` and ``dS/dC``.

    ``dS/dC`` is the derivative with respect to symmetric ``C`` (minor and major
    symmetric), returned with the same leading size as ``C``.
    """
    d = np.shape(C)[0]
    C3 = _embed(C)
    _check_spd(C3)
    Ci = np.linalg.inv(C3)
    lnJ = 0.5 * np.log(np.linalg.det(C3))
    mu, chi = params.mu, params.chi
    S = mu * (np.eye(3) - Ci) + chi * lnJ * Ci
    dS = 0.5 * (chi * np.einsum("IJ,KL->IJKL", Ci, Ci)
                + (mu - chi * lnJ) * (np.einsum("IK,JL->IJKL", Ci, Ci) + np.einsum("IL,JK->IJKL", Ci, Ci)))
    return S[:d, :d], dS[:d, :d, :d, :d]


def element_residual_stiffness(X, u, params, backend=None):
    """Internal force and tangent of one linear simplex.

    Parameters
    ----------
    X : ndarray (d+1, d)
        Reference nodal coordinates.
    u : ndarray (d+1, d)
        Nodal displacements.

    Returns
    -------
    residual : ndarray ((d+1)*d,)
        Gradient of the element strain energy, node-major.
    stiffness : ndarray ((d+1)*d, (d+1)*d)
    """
    X = np.asarray(X, dtype=float)
    nen = X.shape[0]
    G, vol = reference_gradients(X, np.arange(nen)[None, :])
    if vol[0] <= 0.0:
        raise MaterialError("element has non-positive reference volume")
    kern = kernels.get_backend(backend)
    _, fe, Ke, detF = kern.neo_hookean(G, vol, np.asarray(u, dtype=float)[None], [params.mu], [params.chi])
    if detF[0] <= 0.0:
        raise InvertedElementError([0], detF)
    return fe[0], Ke[0]


class ContinuumModel:
    """Precomputed reference data for all deformable elements of a mesh."""

    def __init__(self, mesh, materials, elements=None, backend=None):
        """``materials`` maps body id to :class:`MaterialParams`."""
        self.mesh = mesh
        self.kernels = kernels.get_backend(backend)
        if elements is None:
            elements = np.arange(mesh.n_elements)
        self.element_ids = np.asarray(elements, dtype=np.int64)
        self.connectivity = mesh.elements[self.element_ids]
        self.G, self.vol0 = reference_gradients(mesh.nodes, self.connectivity)
        body = mesh.body[self.element_ids]
        self.mu = np.array([materials[int(b)].mu for b in body])
        self.chi = np.array([materials[int(b)].chi for b in body])
        d = mesh.dim
        self.dofs = (self.connectivity[:, :, None] * d + np.arange(d)).reshape(len(body), -1)

    def evaluate(self, u):
        """Energies, element forces and tangents at nodal displacements ``u`` (N, d)."""
        ue = np.asarray(u, dtype=float)[self.connectivity]
        energy, fe, Ke, detF = self.kernels.neo_hookean(self.G, self.vol0, ue, self.mu, self.chi)
        bad = np.nonzero(detF <= 0.0)[0]
        if bad.size:
            raise InvertedElementError(self.element_ids[bad], detF[bad])
        return energy, fe, Ke
