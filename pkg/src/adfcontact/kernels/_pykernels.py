"""Vectorised numpy implementations of the element kernels.

This is the reference backend. The compiled extension ``_ckernels`` exposes the
same four functions with identical signatures and is preferred when present.
"""

import numpy as np

__all__ = ["neo_hookean", "screened_poisson", "barycentric", "contact"]

NAME = "python"


def _parent_gradients(d):
    # rows: dN_K/dxi for N_1 = 1 - sum(xi), N_{K+1} = xi_K
    return np.vstack([-np.ones(d), np.eye(d)])


def _jacobians(xe):
    """Columns x_{K+1} - x_1 for every simplex in ``xe`` (n, d+1, d)."""
    return np.swapaxes(xe[:, 1:, :] - xe[:, :1, :], 1, 2)


def neo_hookean(G, vol0, ue, mu, chi):
    """Total-Lagrangian residual and tangent for linear simplices.

    Parameters
    ----------
    G : ndarray (ne, nen, d)
        Reference shape-function gradients dN/dX.
    vol0 : ndarray (ne,)
        Reference element measures.
    ue : ndarray (ne, nen, d)
        Element nodal displacements.
    mu, chi : ndarray (ne,)
        Shear modulus and the logarithmic bulk coefficient.

    Returns
    -------
    energy : ndarray (ne,)
    fe : ndarray (ne, nen*d)
    Ke : ndarray (ne, nen*d, nen*d)
    detF : ndarray (ne,)
        Elements with ``detF <= 0`` get zero energy, force and stiffness.
    """
    G = np.asarray(G, dtype=float)
    ue = np.asarray(ue, dtype=float)
    ne, nen, d = G.shape
    F = np.broadcast_to(np.eye(3), (ne, 3, 3)).copy()
    F[:, :d, :d] += np.einsum("eai,eaj->eij", ue, G)
    detF = np.linalg.det(F)
    ok = detF > 0.0
    safe = np.where(ok, detF, 1.0)
    lnJ = np.log(safe)

    C = np.einsum("eki,ekj->eij", F, F)
    Ci = np.linalg.inv(np.where(ok[:, None, None], C, np.eye(3)))
    mu = np.asarray(mu, dtype=float)
    chi = np.asarray(chi, dtype=float)
    trC = np.trace(C, axis1=1, axis2=2)
    energy = 0.5 * mu * (trC - 3.0) - mu * lnJ + 0.5 * chi * lnJ**2
    S = mu[:, None, None] * (np.eye(3) - Ci) + (chi * lnJ)[:, None, None] * Ci

    Fd = F[:, :d, :d]
    Sd = S[:, :d, :d]
    Cid = Ci[:, :d, :d]
    P = Fd @ Sd
    fe = np.einsum("eiJ,eaJ->eai", P, G).reshape(ne, nen * d) * vol0[:, None]

    coef = mu - chi * lnJ
    CC = (chi[:, None, None, None, None] * np.einsum("eIJ,eKL->eIJKL", Cid, Cid)
          + coef[:, None, None, None, None]
          * (np.einsum("eIK,eJL->eIJKL", Cid, Cid) + np.einsum("eIL,eJK->eIJKL", Cid, Cid)))
    # B[e, a, i, I, J] = F_iI G_aJ
    B = np.einsum("eiI,eaJ->eaiIJ", Fd, G)
    tmp = np.einsum("eaiIJ,eIJKL->eaiKL", B, CC)
    Kmat = np.einsum("eaiKL,ebkKL->eaibk", tmp, B)
    GSG = np.einsum("eaJ,eJL,ebL->eab", G, Sd, G)
    Kgeo = np.einsum("eab,ik->eaibk", GSG, np.eye(d))
    Ke = (Kmat + Kgeo).reshape(ne, nen * d, nen * d) * vol0[:, None, None]

    energy = np.where(ok, energy * vol0, 0.0)
    fe[~ok] = 0.0
    Ke[~ok] = 0.0
    return energy, fe, Ke, detF


def screened_poisson(xe, c_L):
    """Element matrices of ``c_L grad(phi).grad(dphi) + phi dphi`` on simplices.

    Uses the exact consistent mass matrix ``V (1 + delta_ab) / ((d+1)(d+2))``.
    Returns ``(Ke, vol)``; degenerate or inverted elements report ``vol <= 0``.
    """
    xe = np.asarray(xe, dtype=float)
    ne, nen, d = xe.shape
    J = _jacobians(xe)
    det = np.linalg.det(J)
    fact = 2.0 if d == 2 else 6.0
    vol = det / fact
    ok = det > 0.0
    Jinv = np.linalg.inv(np.where(ok[:, None, None], J, np.eye(d)))
    dN = np.einsum("kj,eji->eki", _parent_gradients(d), Jinv)
    stiff = c_L * np.einsum("eki,eli->ekl", dN, dN) * vol[:, None, None]
    mass = (np.ones((nen, nen)) + np.eye(nen)) / ((d + 1) * (d + 2))
    Ke = stiff + mass[None] * vol[:, None, None]
    Ke[~ok] = 0.0
    return Ke, vol


def barycentric(points, xe):
    """Shape-function values of ``points[i]`` with respect to simplex ``xe[i]``.

    Returns ``(N, det)`` where ``det`` is the Jacobian determinant; rows with
    ``det == 0`` are filled with ``nan``.
    """
    points = np.asarray(points, dtype=float)
    xe = np.asarray(xe, dtype=float)
    n, nen, d = xe.shape
    J = _jacobians(xe)
    det = np.linalg.det(J)
    ok = det != 0.0
    rhs = points - xe[:, 0, :]
    xi = np.full((n, d), np.nan)
    if ok.any():
        xi[ok] = np.linalg.solve(J[ok], rhs[ok][..., None])[..., 0]
    N = np.empty((n, nen))
    N[:, 0] = 1.0 - xi.sum(axis=1)
    N[:, 1:] = xi
    return N, det


def contact(xe, xI, phi, kappa, sgamma):
    """Courant-Beltrami contact elements with frozen nodal potentials.

    Parameters
    ----------
    xe : ndarray (na, d+1, d)
        Current coordinates of the target simplices.
    xI : ndarray (na, d)
        Current coordinates of the incident nodes.
    phi : ndarray (na, d+1)
        Nodal screened-Poisson values of the targets.
    kappa : ndarray (na,)
        Effective penalty per element.
    sgamma : float
        Sign times gap normalisation, ``g = sgamma * log(phi)``.

    Returns
    -------
    g : ndarray (na,)
    r : ndarray (na, (d+2)*d)
        Gradient of ``-kappa/3 min(0, g)**3`` over ``[x_1..x_{d+1}, x_I]``.
    K : ndarray (na, (d+2)*d, (d+2)*d)
    """
    xe = np.asarray(xe, dtype=float)
    xI = np.asarray(xI, dtype=float)
    phi = np.asarray(phi, dtype=float)
    na, nen, d = xe.shape
    n = (d + 2) * d
    J = _jacobians(xe)
    B = np.linalg.inv(J)
    xi = np.einsum("eij,ej->ei", B, xI - xe[:, 0, :])
    cm = _parent_gradients(d)
    Nt = np.empty((na, d + 2))
    Nt[:, 0] = 1.0 - xi.sum(axis=1)
    Nt[:, 1:d + 1] = xi
    Nt[:, d + 1] = -1.0
    T = np.zeros((na, d + 2, d))
    T[:, :d + 1, :] = np.einsum("kj,ejm->ekm", cm, B)
    ph = np.einsum("ek,ek->e", Nt[:, :d + 1], phi)
    w = np.einsum("kj,ek->ej", cm, phi)
    wB = np.einsum("ej,ejm->em", w, B)

    q = -(Nt[:, :, None] * wB[:, None, :]).reshape(na, n)
    # W2[(P,m),(Q,s)] = Nt_Q T_P[s] wB[m] + Nt_P wB[s] T_Q[m]
    W2 = np.einsum("eQ,ePs,em->ePmQs", Nt, T, wB)
    W2 = (W2 + W2.transpose(0, 3, 4, 1, 2)).reshape(na, n, n)

    g = sgamma * np.log(ph)
    dg = (sgamma / ph)[:, None] * q
    d2g = sgamma * (W2 / ph[:, None, None]
                    - np.einsum("ea,eb->eab", q, q) / (ph**2)[:, None, None])
    m = np.minimum(0.0, g)
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), (na,))
    r = -(kappa * m**2)[:, None] * dg
    K = -(kappa[:, None, None]
          * (2.0 * m[:, None, None] * np.einsum("ea,eb->eab", dg, dg)
             + (m**2)[:, None, None] * d2g))
    return g, r, K
