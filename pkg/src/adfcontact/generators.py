"""Structured and Delaunay-based mesh generators for tests and scenarios.

Every generator returns ``(nodes, elements)`` with positively oriented
simplices; :func:`~adfcontact.mesh.merge_meshes` turns a list of them into a
multi-body :class:`~adfcontact.mesh.Mesh`.
"""

import itertools
import math

import numpy as np
from scipy.spatial import Delaunay

from .mesh import merge_meshes, signed_volumes

__all__ = [
    "rectangle", "tensor_grid", "u_channel", "strip", "disk",
    "regular_polygon", "box", "extrude", "cylinder", "cone", "wedge",
    "compression2d_scene", "patch_test_scene", "two_block_scene",
]


def _orient(nodes, elements):
    elements = np.array(elements, dtype=np.int64)
    vol = signed_volumes(nodes, elements)
    flip = vol < 0
    elements[flip, 0], elements[flip, 1] = elements[flip, 1], elements[flip, 0].copy()
    return elements


def _compact(nodes, elements):
    used = np.unique(elements)
    remap = np.full(len(nodes), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return nodes[used], remap[elements]


def _divisions(length, h):
    return max(1, int(math.ceil(length / h - 1e-9)))


def tensor_grid(xs, ys, keep=None):
    """Triangulate the tensor grid ``xs x ys``; each cell gets two triangles.

    ``keep(xc, yc)`` may drop cells by their centre.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    if keep is not None:
        mask = np.asarray(keep(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])), dtype=bool)
        i, j = i[mask], j[mask]
    n00 = j * (nx + 1) + i
    n10 = n00 + 1
    n01 = n00 + nx + 1
    n11 = n01 + 1
    tri = np.vstack([np.column_stack([n00, n10, n11]), np.column_stack([n00, n11, n01])])
    # interleave so cell k owns triangles 2k, 2k+1
    tri = tri.reshape(2, -1, 3).transpose(1, 0, 2).reshape(-1, 3)
    nodes, tri = _compact(nodes, tri)
    return nodes, _orient(nodes, tri)


def rectangle(x0, y0, x1, y1, nx, ny):
    """Structured ``nx`` by ``ny`` rectangle, every cell split along one diagonal."""
    return tensor_grid(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1))


def _rect_h(x0, y0, x1, y1, h):
    return rectangle(x0, y0, x1, y1, _divisions(x1 - x0, h), _divisions(y1 - y0, h))


def strip(length, width, h):
    return _rect_h(0.0, 0.0, length, width, h)


def _breaks(points, h):
    out = [points[0]]
    for a, b in zip(points[:-1], points[1:]):
        out.extend(np.linspace(a, b, _divisions(b - a, h) + 1)[1:])
    return np.array(out)


def u_channel(x0, y0, width, height, wall, h):
    """A U-shaped body: outer box minus an open-topped cavity."""
    xs = _breaks([x0, x0 + wall, x0 + width - wall, x0 + width], h)
    ys = _breaks([y0, y0 + wall, y0 + height], h)

    def keep(xc, yc):
        inside = (xc > x0 + wall) & (xc < x0 + width - wall) & (yc > y0 + wall)
        return ~inside

    return tensor_grid(xs, ys, keep)


def disk(radius, h, center=(0.0, 0.0)):
    """Disk from concentric rings of points, Delaunay-triangulated."""
    nr = _divisions(radius, h)
    pts = [np.zeros((1, 2))]
    for k in range(1, nr + 1):
        r = radius * k / nr
        n = max(6, int(round(2.0 * math.pi * r / h)))
        t = 2.0 * math.pi * np.arange(n) / n + (0.5 * math.pi / n) * (k % 2)
        pts.append(np.column_stack([r * np.cos(t), r * np.sin(t)]))
    pts = np.vstack(pts)
    tri = Delaunay(pts).simplices
    vol = signed_volumes(pts, tri)
    tri = tri[np.abs(vol) > 1e-12 * h * h]
    pts, tri = _compact(pts, tri)
    return pts + np.asarray(center, dtype=float), _orient(pts, tri)


def regular_polygon(center, radius, sides, h, rotation=0.0):
    """Regular polygon split into a fan of congruent triangles, each refined uniformly."""
    cx, cy = center
    ang = rotation + 2.0 * math.pi * np.arange(sides) / sides
    verts = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    side = 2.0 * radius * math.sin(math.pi / sides)
    k = _divisions(max(side, radius), h)
    pts, tris = [], []
    base = 0
    for s in range(sides):
        a, b = verts[s], verts[(s + 1) % sides]
        index = {}
        for i in range(k + 1):
            for j in range(k + 1 - i):
                index[i, j] = base + len(index)
                # barycentric: centre weight (k-i-j)/k, a weight i/k, b weight j/k
                pts.append((i * a + j * b) / k)
        for i in range(k):
            for j in range(k - i):
                tris.append((index[i, j], index[i + 1, j], index[i, j + 1]))
                if i + j < k - 1:
                    tris.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
        base += len(index)
    pts = np.array(pts)
    key = np.round(pts / (radius * 1e-9)).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    tris = inverse.ravel()[np.array(tris)]
    pts = pts[first] + np.array([cx, cy])
    return pts, _orient(pts, tris)


def box(x0, x1, n):
    """Structured brick with six tetrahedra per hexahedral cell.

    ``x0``, ``x1`` are opposite corners; ``n`` is the number of cells per axis.
    """
    axes = [np.linspace(x0[k], x1[k], n[k] + 1) for k in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    shape = (n[0] + 1, n[1] + 1, n[2] + 1)
    ii, jj, kk = np.meshgrid(*(np.arange(m) for m in n), indexing="ij")
    ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()

    def vid(di, dj, dk):
        return np.ravel_multi_index((ii + di, jj + dj, kk + dk), shape)

    tets = []
    # Kuhn split: one tetrahedron per axis permutation, all sharing the main diagonal
    for perm in itertools.permutations(range(3)):
        corner = [0, 0, 0]
        path = [vid(*corner)]
        for ax in perm:
            corner[ax] = 1
            path.append(vid(*corner))
        tets.append(np.column_stack(path))
    tets = np.stack(tets, axis=1).reshape(-1, 4)
    return nodes, _orient(nodes, tets)


def _triangulate(pts, h):
    tri = Delaunay(pts).simplices
    vol = signed_volumes(pts, tri)
    tri = tri[np.abs(vol) > 1e-10 * h * h]
    pts, tri = _compact(pts, tri)
    return pts, _orient(pts, tri)


def extrude(nodes2d, tris, heights, scale=None):
    """Extrude a planar triangulation along +z into tetrahedra.

    Each prism is cut into three tetrahedra by the global-index rule, so the
    diagonals of shared quadrilateral faces agree. ``scale(z)`` shrinks the
    cross-section with height; a zero scale on the last layer collapses it
    onto a single apex node.
    """
    nodes2d = np.asarray(nodes2d, dtype=float)
    tris = np.sort(np.asarray(tris, dtype=np.int64), axis=1)
    n2 = len(nodes2d)
    layers = []
    apex = None
    for k, z in enumerate(heights):
        f = 1.0 if scale is None else scale(z)
        if f == 0.0:
            if k != len(heights) - 1:
                raise ValueError("only the last layer may collapse")
            apex = len(layers) * n2
            layers.append(np.array([[0.0, 0.0, z]]))
            break
        layers.append(np.column_stack([f * nodes2d, np.full(n2, z)]))
    nodes = np.vstack(layers)
    tets = []
    nlay = len(heights) - (1 if apex is not None else 0)
    for k in range(nlay - 1):
        lo = tris + k * n2
        hi = tris + (k + 1) * n2
        a, b, c = lo.T
        A, B, C = hi.T
        tets += [np.column_stack([a, b, c, C]), np.column_stack([a, b, B, C]),
                 np.column_stack([a, A, B, C])]
    if apex is not None:
        top = tris + (nlay - 1) * n2
        tets.append(np.column_stack([top, np.full(len(top), apex)]))
    tets = np.vstack(tets)
    return nodes, _orient(nodes, tets)


def _disk_points(r, h):
    pts = [np.zeros((1, 2))]
    nr = _divisions(r, h)
    for k in range(1, nr + 1):
        rk = r * k / nr
        n = max(6, int(round(2.0 * math.pi * rk / h)))
        t = 2.0 * math.pi * np.arange(n) / n + (0.5 * math.pi / n) * (k % 2)
        pts.append(np.column_stack([rk * np.cos(t), rk * np.sin(t)]))
    return np.vstack(pts)


def _axis_frame(nodes, axis):
    # extrusion runs along z; rotate so it runs along ``axis``
    if axis == 2:
        return nodes
    perm = {0: [2, 0, 1], 1: [1, 2, 0]}[axis]
    return nodes[:, perm]


def cylinder(base, radius, length, h, axis=0):
    """Cylinder along coordinate ``axis`` whose base disc is centred at ``base``."""
    pts, tri = _triangulate(_disk_points(radius, h), h)
    zs = np.linspace(0.0, length, _divisions(length, h) + 1)
    nodes, tets = extrude(pts, tri, zs)
    nodes = _axis_frame(nodes, axis) + np.asarray(base, dtype=float)
    return nodes, _orient(nodes, tets)


def cone(base, radius, height, h):
    """Upright cone (apex towards +z) with its base disc centred at ``base``."""
    pts, tri = _triangulate(_disk_points(radius, h), h)
    zs = np.linspace(0.0, height, _divisions(height, h) + 1)
    nodes, tets = extrude(pts, tri, zs, scale=lambda z: max(0.0, 1.0 - z / height) if z < height else 0.0)
    return nodes + np.asarray(base, dtype=float), tets


def wedge(base, radius, width, angle_deg, h):
    """Circular sector of ``angle_deg`` extruded by ``width`` along x.

    The sector apex line passes through ``base``; the sector opens towards -z.
    """
    half = math.radians(angle_deg) / 2.0
    pts2 = [np.zeros((1, 2))]
    nr = _divisions(radius, h)
    for k in range(1, nr + 1):
        r = radius * k / nr
        n = max(2, int(math.ceil(2.0 * half * r / h)) + 1)
        t = np.linspace(-half, half, n)
        pts2.append(np.column_stack([r * np.sin(t), -r * np.cos(t)]))
    pts, tri = _triangulate(np.vstack(pts2), h)
    xs = np.linspace(0.0, width, _divisions(width, h) + 1)
    nodes, tets = extrude(pts, tri, xs)
    nodes = _axis_frame(nodes, 0) + np.asarray(base, dtype=float)
    return nodes, _orient(nodes, tets)


def compression2d_scene(h):
    """Four flat-topped polygons in a rigid U, pressed by a rectangular punch.

    Bodies: 0 = U (rigid), 1..4 = polygons, 5 = punch. Returns ``(mesh, info)``
    where ``info`` holds named geometric data used to set up the scenario.
    """
    parts = [u_channel(0.0, 0.0, 0.5, 0.2, 0.04, h)]
    floor = 0.04 + 0.001
    # (sides, circumradius, rotation) chosen so each shape has flat top and bottom
    shapes = [(4, 0.08 / math.sqrt(2.0), math.pi / 4.0),
              (6, 0.045, 0.0),
              (8, 0.046, math.pi / 8.0),
              (12, 0.045, math.pi / 12.0)]
    tops = []
    for cx, (sides, R, rot) in zip((0.1, 0.2, 0.3, 0.4), shapes):
        half_height = R * math.cos(math.pi / sides)
        nodes, tri = regular_polygon((cx, floor + half_height), R, sides, h, rot)
        parts.append((nodes, tri))
        tops.append(floor + 2.0 * half_height)
    punch_bottom = max(tops) + 0.001
    parts.append(_rect_h(0.06, punch_bottom, 0.44, punch_bottom + 0.06, h))
    mesh = merge_meshes(parts)
    info = {"punch_top": punch_bottom + 0.06, "punch_bottom": punch_bottom, "floor": 0.04}
    return mesh, info


def patch_test_scene(h_top=0.1, h_bottom=1.0 / 7.0):
    """Deformable block [0,1]x[0.5,1] resting on a wider rigid block [-0.5,1.5]x[0,0.5].

    The meshes do not conform at the interface. Bodies: 0 = lower, 1 = upper.
    """
    lower = _rect_h(-0.5, 0.0, 1.5, 0.5, h_bottom)
    upper = _rect_h(0.0, 0.5, 1.0, 1.0, h_top)
    return merge_meshes([lower, upper])


def two_block_scene(h=0.25, overlap=0.0):
    """Two unit cubes stacked along z, tetrahedral, for 3D smoke tests."""
    n = max(1, int(round(1.0 / h)))
    lower = box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (n, n, n))
    upper = box((0.2, 0.2, 1.0 - overlap), (0.8, 0.8, 1.6 - overlap),
                (max(1, int(round(0.6 / h))),) * 3)
    return merge_meshes([lower, upper])
