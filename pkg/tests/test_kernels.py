import os
import subprocess
import sys

import numpy as np
import pytest

from adfcontact import kernels
from adfcontact.fem import reference_gradients

from conftest import random_simplex


def _batch(d, n=40, seed=3):
    rng = np.random.default_rng(seed)
    xe = np.array([random_simplex(rng, d, max_cond=20.0) for _ in range(n)])
    conn = np.arange(n * (d + 1)).reshape(n, d + 1)
    G, vol = reference_gradients(xe.reshape(-1, d), conn)
    ue = 0.05 * rng.standard_normal((n, d + 1, d))
    mu = rng.uniform(1.0, 10.0, n)
    chi = rng.uniform(1.0, 10.0, n)
    N = rng.dirichlet(np.ones(d + 1), n)
    xI = np.einsum("ek,ekj->ej", N, xe)
    phi = rng.uniform(0.2, 0.95, (n, d + 1))
    kappa = rng.uniform(1.0, 100.0, n)
    return xe, G, vol, ue, mu, chi, xI, phi, kappa


@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="compiled kernels not built")
@pytest.mark.parametrize("d", [2, 3])
def test_backends_agree(d):
    xe, G, vol, ue, mu, chi, xI, phi, kappa = _batch(d)
    c, p = kernels.get_backend("cython"), kernels.get_backend("python")
    for a, b in zip(c.neo_hookean(G, vol, ue, mu, chi), p.neo_hookean(G, vol, ue, mu, chi)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(b).max())
    for a, b in zip(c.screened_poisson(xe, 0.01), p.screened_poisson(xe, 0.01)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)
    for a, b in zip(c.barycentric(xI, xe), p.barycentric(xI, xe)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)
    for a, b in zip(c.contact(xe, xI, phi, kappa, 0.3), p.contact(xe, xI, phi, kappa, 0.3)):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-11 * max(np.abs(b).max(), 1.0))


@pytest.mark.parametrize("d", [2, 3])
def test_poisson_element_rows_of_laplacian_sum_to_mass(backend, d):
    # K = c_L * stiffness + mass; stiffness rows sum to zero, so K @ 1 is the lumped mass
    xe, *_ = _batch(d, n=5)
    Ke, vol = kernels.get_backend(backend).screened_poisson(xe, 0.7)
    np.testing.assert_allclose(Ke.sum(axis=2), np.repeat(vol[:, None] / (d + 1), d + 1, axis=1),
                               rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(Ke, np.swapaxes(Ke, 1, 2), atol=1e-15)


def test_barycentric_flags_degenerate(backend):
    xe = np.array([[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]])
    N, det = kernels.get_backend(backend).barycentric(np.array([[0.5, 0.0]]), xe)
    assert det[0] == 0.0


def test_environment_forces_fallback():
    code = "from adfcontact import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, ADFCONTACT_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError, match="unknown"):
        kernels.get_backend("fortran")
