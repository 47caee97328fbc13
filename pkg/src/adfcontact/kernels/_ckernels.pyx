# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled element kernels.

Same signatures and results as :mod:`adfcontact.kernels._pykernels`; loops run
element by element over fixed-size stack arrays.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, NAN

cnp.import_array()

NAME = "cython"


cdef inline double _det3(double[3][3] a) noexcept nogil:
    return (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))


cdef inline double _inv(double[3][3] a, double[3][3] out, int d) noexcept nogil:
    """Invert the leading d x d block of ``a``; returns its determinant."""
    cdef double det
    if d == 2:
        det = a[0][0] * a[1][1] - a[0][1] * a[1][0]
        if det == 0.0:
            return 0.0
        out[0][0] = a[1][1] / det
        out[0][1] = -a[0][1] / det
        out[1][0] = -a[1][0] / det
        out[1][1] = a[0][0] / det
        return det
    det = _det3(a)
    if det == 0.0:
        return 0.0
    out[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det
    out[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det
    out[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det
    out[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det
    out[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det
    out[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det
    out[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det
    out[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det
    out[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det
    return det


cdef inline void _jacobian(const double[:, :, ::1] xe, Py_ssize_t e, int d,
                           double[3][3] J) noexcept nogil:
    cdef int i, j
    for i in range(d):
        for j in range(d):
            J[i][j] = xe[e, j + 1, i] - xe[e, 0, i]


def neo_hookean(G, vol0, ue, mu, chi):
    cdef const double[:, :, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const double[::1] V = np.ascontiguousarray(vol0, dtype=np.float64)
    cdef const double[:, :, ::1] U = np.ascontiguousarray(ue, dtype=np.float64)
    cdef const double[::1] MU = np.ascontiguousarray(np.broadcast_to(mu, (Gv.shape[0],)), dtype=np.float64)
    cdef const double[::1] CHI = np.ascontiguousarray(np.broadcast_to(chi, (Gv.shape[0],)), dtype=np.float64)
    cdef Py_ssize_t ne = Gv.shape[0]
    cdef int nen = <int>Gv.shape[1]
    cdef int d = <int>Gv.shape[2]
    cdef int ndof = nen * d

    energy_a = np.zeros(ne)
    fe_a = np.zeros((ne, ndof))
    Ke_a = np.zeros((ne, ndof, ndof))
    detF_a = np.zeros(ne)
    cdef double[::1] energy = energy_a
    cdef double[:, ::1] fe = fe_a
    cdef double[:, :, ::1] Ke = Ke_a
    cdef double[::1] detF = detF_a

    cdef double F[3][3]
    cdef double C[3][3]
    cdef double Ci[3][3]
    cdef double S[3][3]
    cdef double P[3][3]
    cdef double CC[3][3][3][3]
    cdef double Bm[4][3][3][3]
    cdef double tmp[12][3][3]
    cdef double GSG[4][4]
    cdef double dF, lnJ, trC, coef, acc, vol, m, c
    cdef Py_ssize_t e
    cdef int a, b, i, k, I, J, K, L, ai, bk

    with nogil:
        for e in range(ne):
            for i in range(3):
                for J in range(3):
                    F[i][J] = 1.0 if i == J else 0.0
            for i in range(d):
                for J in range(d):
                    acc = 0.0
                    for a in range(nen):
                        acc = acc + U[e, a, i] * Gv[e, a, J]
                    F[i][J] += acc
            dF = _det3(F)
            detF[e] = dF
            if dF <= 0.0:
                continue
            lnJ = log(dF)
            for I in range(3):
                for J in range(3):
                    acc = 0.0
                    for k in range(3):
                        acc = acc + F[k][I] * F[k][J]
                    C[I][J] = acc
            _inv(C, Ci, 3)
            m = MU[e]
            c = CHI[e]
            vol = V[e]
            trC = C[0][0] + C[1][1] + C[2][2]
            energy[e] = vol * (0.5 * m * (trC - 3.0) - m * lnJ + 0.5 * c * lnJ * lnJ)
            for I in range(3):
                for J in range(3):
                    S[I][J] = m * ((1.0 if I == J else 0.0) - Ci[I][J]) + c * lnJ * Ci[I][J]
            for i in range(d):
                for J in range(d):
                    acc = 0.0
                    for K in range(d):
                        acc = acc + F[i][K] * S[K][J]
                    P[i][J] = acc
            for a in range(nen):
                for i in range(d):
                    acc = 0.0
                    for J in range(d):
                        acc = acc + P[i][J] * Gv[e, a, J]
                    fe[e, a * d + i] = vol * acc
            coef = m - c * lnJ
            for I in range(d):
                for J in range(d):
                    for K in range(d):
                        for L in range(d):
                            CC[I][J][K][L] = (c * Ci[I][J] * Ci[K][L]
                                              + coef * (Ci[I][K] * Ci[J][L] + Ci[I][L] * Ci[J][K]))
            for a in range(nen):
                for i in range(d):
                    for I in range(d):
                        for J in range(d):
                            Bm[a][i][I][J] = F[i][I] * Gv[e, a, J]
            for a in range(nen):
                for i in range(d):
                    ai = a * d + i
                    for K in range(d):
                        for L in range(d):
                            acc = 0.0
                            for I in range(d):
                                for J in range(d):
                                    acc = acc + Bm[a][i][I][J] * CC[I][J][K][L]
                            tmp[ai][K][L] = acc
            for a in range(nen):
                for b in range(nen):
                    acc = 0.0
                    for J in range(d):
                        for L in range(d):
                            acc = acc + Gv[e, a, J] * S[J][L] * Gv[e, b, L]
                    GSG[a][b] = acc
            for a in range(nen):
                for i in range(d):
                    ai = a * d + i
                    for b in range(nen):
                        for k in range(d):
                            bk = b * d + k
                            acc = 0.0
                            for K in range(d):
                                for L in range(d):
                                    acc = acc + tmp[ai][K][L] * Bm[b][k][K][L]
                            if i == k:
                                acc = acc + GSG[a][b]
                            Ke[e, ai, bk] = vol * acc
    return energy_a, fe_a, Ke_a, detF_a


def screened_poisson(xe, double c_L):
    cdef const double[:, :, ::1] X = np.ascontiguousarray(xe, dtype=np.float64)
    cdef Py_ssize_t ne = X.shape[0]
    cdef int nen = <int>X.shape[1]
    cdef int d = <int>X.shape[2]
    Ke_a = np.zeros((ne, nen, nen))
    vol_a = np.zeros(ne)
    cdef double[:, :, ::1] Ke = Ke_a
    cdef double[::1] vol = vol_a
    cdef double Jm[3][3]
    cdef double Ji[3][3]
    cdef double dN[4][3]
    cdef double det, v, acc, mfac
    cdef double fact = 2.0 if d == 2 else 6.0
    cdef Py_ssize_t e
    cdef int a, b, i
    mfac = 1.0 / ((d + 1) * (d + 2))
    with nogil:
        for e in range(ne):
            _jacobian(X, e, d, Jm)
            det = _inv(Jm, Ji, d)
            v = det / fact
            vol[e] = v
            if det <= 0.0:
                continue
            # dN_K/dx = c_K^T J^-1
            for i in range(d):
                acc = 0.0
                for a in range(d):
                    acc = acc - Ji[a][i]
                dN[0][i] = acc
                for a in range(d):
                    dN[a + 1][i] = Ji[a][i]
            for a in range(nen):
                for b in range(nen):
                    acc = 0.0
                    for i in range(d):
                        acc = acc + dN[a][i] * dN[b][i]
                    Ke[e, a, b] = v * (c_L * acc + mfac * (2.0 if a == b else 1.0))
    return Ke_a, vol_a


def barycentric(points, xe):
    cdef const double[:, ::1] Pt = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, :, ::1] X = np.ascontiguousarray(xe, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0]
    cdef int nen = <int>X.shape[1]
    cdef int d = <int>X.shape[2]
    N_a = np.empty((n, nen))
    det_a = np.empty(n)
    cdef double[:, ::1] N = N_a
    cdef double[::1] dets = det_a
    cdef double Jm[3][3]
    cdef double Ji[3][3]
    cdef double r[3]
    cdef double det, acc, s
    cdef Py_ssize_t e
    cdef int a, i
    with nogil:
        for e in range(n):
            _jacobian(X, e, d, Jm)
            det = _inv(Jm, Ji, d)
            dets[e] = det
            if det == 0.0:
                for a in range(nen):
                    N[e, a] = NAN
                continue
            for i in range(d):
                r[i] = Pt[e, i] - X[e, 0, i]
            s = 0.0
            for a in range(d):
                acc = 0.0
                for i in range(d):
                    acc = acc + Ji[a][i] * r[i]
                N[e, a + 1] = acc
                s = s + acc
            N[e, 0] = 1.0 - s
    return N_a, det_a


def contact(xe, xI, phi, kappa, double sgamma):
    cdef const double[:, :, ::1] X = np.ascontiguousarray(xe, dtype=np.float64)
    cdef const double[:, ::1] XI = np.ascontiguousarray(xI, dtype=np.float64)
    cdef const double[:, ::1] PH = np.ascontiguousarray(phi, dtype=np.float64)
    cdef Py_ssize_t na = X.shape[0]
    cdef const double[::1] KAP = np.ascontiguousarray(np.broadcast_to(kappa, (na,)), dtype=np.float64)
    cdef int nen = <int>X.shape[1]
    cdef int d = <int>X.shape[2]
    cdef int nn = d + 2
    cdef int n = nn * d
    g_a = np.zeros(na)
    r_a = np.zeros((na, n))
    K_a = np.zeros((na, n, n))
    cdef double[::1] gv = g_a
    cdef double[:, ::1] R = r_a
    cdef double[:, :, ::1] Kv = K_a
    cdef double Jm[3][3]
    cdef double B[3][3]
    cdef double Nt[5]
    cdef double T[5][3]
    cdef double w[3]
    cdef double wB[3]
    cdef double q[15]
    cdef double ph, acc, g, mm, kap, w2, d2
    cdef Py_ssize_t e
    cdef int P, Q, i, j, s, ia, ib
    with nogil:
        for e in range(na):
            _jacobian(X, e, d, Jm)
            _inv(Jm, B, d)
            acc = 0.0
            for i in range(d):
                Nt[i + 1] = 0.0
                for j in range(d):
                    Nt[i + 1] += B[i][j] * (XI[e, j] - X[e, 0, j])
                acc = acc + Nt[i + 1]
            Nt[0] = 1.0 - acc
            Nt[d + 1] = -1.0
            for s in range(d):
                acc = 0.0
                for i in range(d):
                    acc = acc - B[i][s]
                T[0][s] = acc
                for i in range(d):
                    T[i + 1][s] = B[i][s]
                T[d + 1][s] = 0.0
            ph = 0.0
            for P in range(nen):
                ph = ph + Nt[P] * PH[e, P]
            for i in range(d):
                w[i] = PH[e, i + 1] - PH[e, 0]
            for s in range(d):
                acc = 0.0
                for i in range(d):
                    acc = acc + w[i] * B[i][s]
                wB[s] = acc
            for P in range(nn):
                for s in range(d):
                    q[P * d + s] = -Nt[P] * wB[s]
            g = sgamma * log(ph)
            gv[e] = g
            if g >= 0.0:
                continue
            mm = g
            kap = KAP[e]
            for P in range(nn):
                for i in range(d):
                    ia = P * d + i
                    R[e, ia] = -kap * mm * mm * sgamma / ph * q[ia]
                    for Q in range(nn):
                        for s in range(d):
                            ib = Q * d + s
                            w2 = Nt[Q] * T[P][s] * wB[i] + Nt[P] * wB[s] * T[Q][i]
                            d2 = sgamma * (w2 / ph - q[ia] * q[ib] / (ph * ph))
                            Kv[e, ia, ib] = -kap * (2.0 * mm * (sgamma / ph) * (sgamma / ph) * q[ia] * q[ib]
                                                    + mm * mm * d2)
    return g_a, r_a, K_a
