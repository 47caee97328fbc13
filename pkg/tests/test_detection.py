import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adfcontact import detection
from adfcontact.generators import rectangle
from adfcontact.mesh import Mesh, extract_boundary, merge_meshes

from scenes import overlap_scene


def exterior(mesh):
    return extract_boundary(mesh).all_exterior_nodes


def test_cells_use_floor():
    cells = detection._cells(np.array([[0.0, 0.0], [0.999, -0.001], [1.0, 2.5], [-1.0, -1.0]]), 1.0)
    assert cells.tolist() == [[0, 0], [0, -1], [1, 2], [-1, -1]]


def test_grid_bins_every_element_once():
    mesh = merge_meshes([rectangle(0, 0, 1, 1, 3, 3), rectangle(0.5, 0.5, 2, 1.5, 4, 2)])
    grid = detection.build_grid(mesh, mesh.nodes, exterior(mesh))
    assert grid.cell_size == pytest.approx(mesh.edge_lengths().max())
    emap = grid.element_map()
    assert sorted(np.concatenate(list(emap.values())).tolist()) == list(range(mesh.n_elements))
    for cell, elems in emap.items():
        np.testing.assert_array_equal(grid.elements_in(cell), elems)
        np.testing.assert_array_equal(np.floor(grid.centroids[elems] / grid.cell_size), np.tile(cell, (len(elems), 1)))
    for cell, nodes in grid.node_map().items():
        np.testing.assert_array_equal(np.sort(grid.nodes_in(cell)), nodes)
    assert grid.elements_in((10**6, 0)).size == 0
    with pytest.raises(ValueError, match="below the largest edge"):
        detection.build_grid(mesh, mesh.nodes, exterior(mesh), cell_size=0.01)


def test_separated_bodies_have_no_pairs():
    mesh = merge_meshes([rectangle(0, 0, 1, 1, 3, 3), rectangle(1.5, 0, 2.5, 1, 3, 3)])
    grid = detection.build_grid(mesh, mesh.nodes, exterior(mesh))
    report = detection.detect(mesh, mesh.nodes, grid)
    assert len(report) == 0 and not report.changed


def test_constructed_containment():
    lower = rectangle(0.0, 0.0, 1.0, 1.0, 1, 1)
    upper = (np.array([[0.3, 0.8], [0.7, 0.8], [0.3, 1.5], [0.7, 1.5]]), np.array([[0, 1, 3], [0, 3, 2]]))
    mesh = merge_meshes([lower, upper])
    grid = detection.build_grid(mesh, mesh.nodes, exterior(mesh))
    report = detection.detect(mesh, mesh.nodes, grid)
    nodes = [a.node for a in report.assignments]
    assert nodes == [4, 5]
    for a in report.assignments:
        assert mesh.body[a.element] == 0
        xe = mesh.nodes[mesh.elements[a.element]]
        N = np.concatenate([[1 - sum(a.xi)], a.xi])
        np.testing.assert_allclose(N @ xe, mesh.nodes[a.node], atol=1e-14)


def test_shared_face_goes_to_smaller_element():
    lower = rectangle(0.0, 0.0, 1.0, 1.0, 1, 1)  # diagonal from (0,0) to (1,1)
    upper = (np.array([[0.5, 0.5], [2.0, 0.5], [2.0, 2.0]]), np.array([[0, 1, 2]]))
    mesh = merge_meshes([lower, upper])
    grid = detection.build_grid(mesh, mesh.nodes, [4])
    report = detection.detect(mesh, mesh.nodes, grid)
    assert [a.key for a in report.assignments] == [(4, 0)]


def test_cross_body_tie_goes_to_smaller_gap():
    a = rectangle(0.0, 0.0, 1.0, 1.0, 1, 1)
    b = rectangle(0.0, 0.0, 1.0, 1.0, 1, 1)
    c = (np.array([[0.4, 0.4], [3.0, 0.4], [0.4, 3.0]]), np.array([[0, 1, 2]]))
    mesh = merge_meshes([a, b, c])
    phi = np.ones(mesh.n_nodes)
    phi[4:8] = 0.5  # body 1 reports the deeper (smaller) gap
    grid = detection.build_grid(mesh, mesh.nodes, [8])
    report = detection.detect(mesh, mesh.nodes, grid, phi=phi, sgamma=0.1)
    assert mesh.body[report.assignments[0].element] == 1
    assert report.assignments[0].g == pytest.approx(0.1 * np.log(0.5))


def test_change_tracking():
    mesh = merge_meshes([rectangle(0, 0, 1, 1, 2, 2), rectangle(0.75, 0.75, 2, 2, 2, 2)])
    grid = detection.build_grid(mesh, mesh.nodes, exterior(mesh))
    first = detection.detect(mesh, mesh.nodes, grid)
    assert first.changed and len(first) > 0
    again = detection.detect(mesh, mesh.nodes, grid, previous=first)
    assert not again.changed and again.released == []
    x = mesh.nodes.copy()
    x[mesh.node_body == 1] += 2.0
    grid = detection.build_grid(mesh, x, exterior(mesh))
    gone = detection.detect(mesh, x, grid, previous=first)
    assert gone.changed and gone.released == sorted(first.keys)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_grid_matches_brute_force(seed, d):
    mesh, x = overlap_scene(np.random.default_rng(seed), d)
    nodes = exterior(mesh)
    grid = detection.build_grid(mesh, x, nodes)
    fast = detection.detect(mesh, x, grid)
    slow = detection.brute_force_detect(mesh, x, nodes)
    assert fast.keys == slow.keys
    assert all(mesh.body[e] != mesh.node_body[n] for n, e in fast.keys)
    assert fast.candidates <= slow.candidates


def test_detection_is_deterministic():
    mesh, x = overlap_scene(np.random.default_rng(5), 2)
    nodes = exterior(mesh)
    runs = [detection.detect(mesh, x, detection.build_grid(mesh, x, nodes)) for _ in range(3)]
    sig = [[(a.key, a.xi) for a in r.assignments] for r in runs]
    assert sig[0] == sig[1] == sig[2]


def test_empty_node_set():
    mesh = Mesh(np.array([[0, 0], [1, 0], [0, 1.0]]), [[0, 1, 2]], [0])
    grid = detection.build_grid(mesh, mesh.nodes, [])
    assert len(detection.detect(mesh, mesh.nodes, grid)) == 0
