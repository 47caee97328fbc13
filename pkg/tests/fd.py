"""Central-difference oracles shared by the unit and acceptance tests."""

import numpy as np


def gradient(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.size)
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = h
        out[k] = (f((x.ravel() + e).reshape(x.shape)) - f((x.ravel() - e).reshape(x.shape))) / (2.0 * h)
    return out


def jacobian(F, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = h
        hi = np.asarray(F((x.ravel() + e).reshape(x.shape)), dtype=float).ravel()
        lo = np.asarray(F((x.ravel() - e).reshape(x.shape)), dtype=float).ravel()
        cols.append((hi - lo) / (2.0 * h))
    return np.column_stack(cols)


def rel_error(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), np.finfo(float).tiny))
