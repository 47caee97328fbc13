import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import i0

from adfcontact import adf, kernels
from adfcontact.generators import disk, rectangle
from adfcontact.mesh import Mesh, extract_boundary


def single(nodes, tri):
    return Mesh(nodes, tri, np.zeros(len(tri), dtype=np.int64))


def locate(mesh, x, point):
    N, _ = kernels.barycentric(np.repeat([point], mesh.n_elements, 0), x[mesh.elements])
    e = int(np.nonzero((N >= -1e-12).all(axis=1))[0][0])
    return e, N[e, 1:]


@pytest.fixture(scope="module")
def strip():
    mesh, bnd, exact, sample = adf.strip_problem(0.01)
    field = adf.solve_field(mesh, l_c=0.2, boundary={0: bnd})
    return mesh, bnd, exact, sample, field


def test_gap_scale_modes():
    assert adf.gap_scale(0.04) == pytest.approx(0.2)
    assert adf.gap_scale(0.04, "diffusion") == pytest.approx(0.04)
    with pytest.raises(ValueError):
        adf.gap_scale(0.04, "other")


def test_single_element_with_all_nodes_fixed(backend):
    mesh = single(np.array([[0, 0], [1, 0], [0, 1.0]]), [[0, 1, 2]])
    f = adf.solve_field(mesh, l_c=0.3, backend=backend)
    np.testing.assert_array_equal(f.phi, 1.0)
    np.testing.assert_array_equal(adf.nodal_gap(f), 0.0)


def test_strip_matches_half_space_solution(strip):
    mesh, _, _, sample, field = strip
    x = mesh.nodes[:, 0]
    near = x <= 1.0
    assert np.abs(field.phi[near] - np.exp(-x[near] / 0.2)).max() <= 1e-3
    g = adf.nodal_gap(field)
    assert np.abs(-g[sample] - x[sample]).max() <= 0.04


def test_strip_gap_and_gradient_at_midpoint(strip):
    mesh, _, _, _, field = strip
    e, xi = locate(mesh, mesh.nodes, [0.5, 0.1])
    ev = adf.eval_gap(field, mesh, e, xi)
    assert ev.g == pytest.approx(-0.5, rel=0.02)
    assert np.linalg.norm(ev.grad_g) == pytest.approx(1.0, rel=0.05)
    np.testing.assert_allclose(ev.normal, [-1.0, 0.0], atol=0.05)


def test_gradient_and_hessian_match_differences(strip):
    mesh, _, _, _, field = strip
    e, xi = locate(mesh, mesh.nodes, [0.3, 0.07])
    x0 = mesh.nodes[mesh.elements[e]].T @ np.concatenate([[1 - xi.sum()], xi])
    J = (mesh.nodes[mesh.elements[e]][1:] - mesh.nodes[mesh.elements[e]][0]).T
    B = np.linalg.inv(J)

    def at(p):
        return adf.eval_gap(field, mesh, e, B @ (p - mesh.nodes[mesh.elements[e]][0]))

    ev = at(x0)
    h = 1e-6
    grad = np.array([(at(x0 + h * k).g - at(x0 - h * k).g) / (2 * h) for k in np.eye(2)])
    hess = np.array([(at(x0 + h * k).grad_g - at(x0 - h * k).grad_g) / (2 * h) for k in np.eye(2)])
    np.testing.assert_allclose(ev.grad_g, grad, rtol=0, atol=1e-8 * np.linalg.norm(ev.grad_g))
    np.testing.assert_allclose(ev.hess_g, hess, rtol=1e-6, atol=1e-8 * np.abs(ev.hess_g).max())
    gp = ev.grad_g / field.sgamma * math.exp(ev.g / field.sgamma)
    expected = -field.sgamma * np.outer(gp, gp) / math.exp(ev.g / field.sgamma) ** 2
    np.testing.assert_allclose(ev.hess_g, expected, rtol=1e-12)


def test_disk_is_radially_symmetric_and_matches_bessel_solution():
    nodes, tri = disk(1.0, 0.05)
    mesh = single(nodes, tri)
    lc = 0.3
    f = adf.solve_field(mesh, l_c=lc)
    r = np.linalg.norm(mesh.nodes, axis=1)
    exact = i0(r / lc) / i0(1.0 / lc)
    assert np.abs(f.phi - exact).max() <= 1e-2
    assert ((f.phi > 0.0) & (f.phi <= 1.0 + 1e-9)).all()


@settings(max_examples=15, deadline=None)
@given(st.floats(1.0, 4.0), st.integers(2, 8), st.integers(2, 8))
def test_phi_stays_in_unit_interval(ratio, nx, ny):
    # the consistent mass matrix keeps a discrete maximum principle only for l_c >~ h
    nodes, tri = rectangle(0.0, 0.0, 1.0, 0.7, nx, ny)
    lc = ratio * max(1.0 / nx, 0.7 / ny)
    f = adf.solve_field(single(nodes, tri), l_c=lc)
    assert (f.phi > 0.0).all() and (f.phi <= 1.0 + 1e-9).all()
    bnd = extract_boundary(single(nodes, tri)).exterior_nodes[0]
    np.testing.assert_array_equal(f.phi[bnd], 1.0)


def test_sign_and_normalization():
    nodes, tri = rectangle(0.0, 0.0, 1.0, 1.0, 6, 6)
    mesh = single(nodes, tri)
    a = adf.solve_field(mesh, l_c=0.2)
    b = adf.solve_field(mesh, l_c=0.2, sign=-1, normalization="diffusion")
    inner = a.phi < 1.0
    assert (adf.nodal_gap(a)[inner] < 0).all()
    np.testing.assert_allclose(adf.nodal_gap(b), -0.2 * adf.nodal_gap(a), rtol=1e-12)


def test_fields_of_bodies_are_independent():
    from adfcontact.mesh import merge_meshes
    one = rectangle(0.0, 0.0, 1.0, 1.0, 4, 4)
    two = rectangle(0.5, 0.5, 1.5, 1.5, 4, 4)  # overlapping on purpose
    f = adf.solve_field(merge_meshes([one, two]), l_c=0.2)
    alone = adf.solve_field(single(*one), l_c=0.2)
    np.testing.assert_allclose(f.phi[:25], alone.phi, rtol=1e-13)


def test_argument_checks():
    nodes, tri = rectangle(0.0, 0.0, 1.0, 1.0, 2, 2)
    mesh = single(nodes, tri)
    with pytest.raises(ValueError):
        adf.solve_field(mesh)
    with pytest.raises(ValueError):
        adf.solve_field(mesh, c_L=0.1, l_c=0.1)
    with pytest.raises(ValueError):
        adf.solve_field(mesh, c_L=-1.0)


def test_non_positive_potential_is_reported():
    mesh = single(np.array([[0, 0], [1, 0], [0, 1.0]]), [[0, 1, 2]])
    f = adf.ScalarField(np.array([1.0, -0.5, 1.0]), 0.04)
    with pytest.raises(adf.FieldError):
        adf.eval_gap(f, mesh, 0, [0.9, 0.05], x=mesh.nodes)


@pytest.mark.filterwarnings("ignore::adfcontact.adf.PhiBoundsWarning")
def test_resolution_warning_below_mesh_size():
    mesh, bnd, exact, sample = adf.strip_problem(0.05)
    with pytest.warns(adf.ResolutionWarning):
        rows = adf.varadhan_limit_check(mesh, bnd, [0.2, 0.02], exact, sample, h=0.05)
    assert [r["below_mesh"] for r in rows] == [False, True]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        adf.varadhan_limit_check(mesh, bnd, [0.2], exact, sample, h=0.05)


def test_strip_error_shrinks_until_discretization_floor():
    # finite-domain error dominates at large l_c, mesh error at small l_c
    mesh, bnd, exact, sample = adf.strip_problem(0.01)
    errs = [r["max_error"] for r in adf.varadhan_limit_check(mesh, bnd, [0.4, 0.2, 0.1], exact, sample)]
    assert errs[0] > errs[1]
    assert max(errs) < 0.01
