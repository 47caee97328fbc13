import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adfcontact import generators
from adfcontact.mesh import (
    Configuration, DegenerateElementError, Mesh, MeshError, MeshParseError,
    euler_characteristic, extract_boundary, load_mesh, merge_meshes, read_snapshot,
    save_mesh, signed_volumes, write_snapshot,
)


def unit_square(nx=2, ny=2):
    nodes, tri = generators.rectangle(0.0, 0.0, 1.0, 1.0, nx, ny)
    return Mesh(nodes, tri, np.zeros(len(tri), dtype=np.int64))


def test_signed_volume_of_reference_simplices():
    assert signed_volumes(np.array([[0, 0], [1, 0], [0, 1.0]]), [[0, 1, 2]])[0] == pytest.approx(0.5)
    tet = np.vstack([np.zeros(3), np.eye(3)])
    assert signed_volumes(tet, [[0, 1, 2, 3]])[0] == pytest.approx(1.0 / 6.0)
    assert signed_volumes(tet, [[1, 0, 2, 3]])[0] == pytest.approx(-1.0 / 6.0)


def test_inverted_element_is_named():
    nodes = np.array([[0, 0], [1, 0], [0, 1], [1, 1.0]])
    with pytest.raises(DegenerateElementError) as exc:
        Mesh(nodes, [[0, 1, 2], [1, 2, 3]], [0, 0])
    assert exc.value.element == 1


def test_validation_errors():
    nodes = np.array([[0, 0], [1, 0], [0, 1.0]])
    with pytest.raises(MeshError, match="missing node"):
        Mesh(nodes, [[0, 1, 5]], [0])
    with pytest.raises(MeshError, match="repeats"):
        Mesh(nodes, [[0, 1, 1]], [0])
    with pytest.raises(MeshError, match="belongs to no element"):
        Mesh(np.vstack([nodes, [[2.0, 2.0]]]), [[0, 1, 2]], [0])
    with pytest.raises(MeshError, match="different bodies"):
        Mesh(np.array([[0, 0], [1, 0], [0, 1], [1, 1.0]]), [[0, 1, 2], [1, 3, 2]], [0, 1])


def test_load_save_roundtrip(tmp_path):
    mesh = generators.compression2d_scene(0.04)[0]
    path = tmp_path / "scene.mesh"
    save_mesh(mesh, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.nodes, mesh.nodes)
    np.testing.assert_array_equal(back.elements, mesh.elements)
    np.testing.assert_array_equal(back.body, mesh.body)


@pytest.mark.parametrize("text, line", [
    ("dim 2\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 0 1\n", 7),
    ("dim 2\nnodes 3\n0 0\n1 x\n0 1\nelements 1\n0 0 1 2\n", 4),
    ("dim 2\nnode 3\n", 2),
    ("dim 2\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 0 1 2\nextra\n", 8),
    ("dim 4\n", 1),
])
def test_parse_errors_report_line(tmp_path, text, line):
    path = tmp_path / "bad.mesh"
    path.write_text(text)
    with pytest.raises(MeshParseError) as exc:
        load_mesh(path)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_comments_and_blank_lines(tmp_path):
    path = tmp_path / "c.mesh"
    path.write_text("# one triangle\ndim 2\n\nnodes 3\n0 0\n1 0  # right\n0 1\nelements 1\n3 0 1 2\n")
    mesh = load_mesh(path)
    assert mesh.body.tolist() == [3]


def test_boundary_of_square():
    mesh = unit_square(3, 2)
    b = extract_boundary(mesh)
    assert len(b.faces) == 2 * (3 + 2)
    x = mesh.nodes[b.exterior_nodes[0]]
    on_edge = np.isclose(x, 0.0) | np.isclose(x, 1.0)
    assert on_edge.any(axis=1).all()
    # local face k is opposite local node k
    for (e, k), fn in zip(b.faces, b.face_nodes):
        assert mesh.elements[e, k] not in fn


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6))
def test_boundary_edge_count_property(nx, ny):
    b = extract_boundary(unit_square(nx, ny))
    assert len(b.faces) == 2 * (nx + ny)
    assert b.exterior_nodes[0].size == 2 * (nx + ny)


@pytest.mark.parametrize("make", [
    lambda: generators.box((0, 0, 0), (1, 1, 1), (2, 3, 2)),
    lambda: generators.cylinder((0, 0, 0), 1.0, 2.0, 0.5),
    lambda: generators.cone((0, 0, 0), 1.0, 1.5, 0.4),
    lambda: generators.wedge((0, 0, 0), 1.0, 1.0, 30.0, 0.4),
])
def test_closed_surfaces_have_sphere_topology(make):
    nodes, tets = make()
    mesh = Mesh(nodes, tets, np.zeros(len(tets), dtype=np.int64))
    assert (signed_volumes(mesh.nodes, mesh.elements) > 0).all()
    assert euler_characteristic(extract_boundary(mesh).face_nodes) == 2


def test_merge_assigns_bodies():
    a = generators.rectangle(0, 0, 1, 1, 1, 1)
    b = generators.rectangle(2, 0, 3, 1, 2, 1)
    mesh = merge_meshes([a, b])
    assert mesh.body.tolist() == [0, 0, 1, 1, 1, 1]
    assert set(mesh.body_nodes(1).tolist()) == set(range(4, 10))
    assert set(extract_boundary(mesh).exterior_nodes) == {0, 1}


def test_compression_scene_bodies():
    mesh, info = generators.compression2d_scene(0.02)
    assert mesh.bodies.tolist() == [0, 1, 2, 3, 4, 5]
    assert (signed_volumes(mesh.nodes, mesh.elements) > 0).all()
    # polygons rest above the holder floor, punch above the polygons
    for b in range(1, 5):
        assert mesh.nodes[mesh.body_nodes(b), 1].min() > info["floor"]
    assert mesh.nodes[mesh.body_nodes(5), 1].min() == pytest.approx(info["punch_bottom"])


@pytest.mark.parametrize("dim", [2, 3])
def test_snapshot_roundtrip(tmp_path, dim):
    if dim == 2:
        mesh = unit_square(3, 3)
    else:
        nodes, tets = generators.box((0, 0, 0), (1, 1, 1), (2, 2, 2))
        mesh = Mesh(nodes, tets, np.zeros(len(tets), dtype=np.int64))
    rng = np.random.default_rng(0)
    u = 0.01 * rng.standard_normal(mesh.nodes.shape)
    phi = rng.uniform(0.1, 1.0, mesh.n_nodes)
    path = tmp_path / "snap.vtk"
    write_snapshot(mesh, Configuration(u), {"phi": phi}, path, vectors={"u": u})
    back = read_snapshot(path)
    np.testing.assert_allclose(back["points"][:, :dim], mesh.nodes + u, rtol=1e-12, atol=1e-14)
    np.testing.assert_array_equal(back["cells"], mesh.elements)
    assert set(back["cell_types"].tolist()) == {5 if dim == 2 else 10}
    np.testing.assert_allclose(back["point_data"]["phi"], phi, rtol=1e-12)
    np.testing.assert_allclose(back["point_data"]["u"][:, :dim], u, rtol=1e-12)
    np.testing.assert_array_equal(back["cell_data"]["body"], mesh.body)


def test_snapshot_rejects_wrong_shape(tmp_path):
    mesh = unit_square()
    with pytest.raises(ValueError, match="shape"):
        write_snapshot(mesh, None, {"phi": np.zeros(2)}, tmp_path / "x.vtk")


def test_edge_lengths():
    mesh = Mesh(np.array([[0, 0], [3, 0], [0, 4.0]]), [[0, 1, 2]], [0])
    assert mesh.edge_lengths()[0] == pytest.approx(5.0)
