"""Simplicial meshes, boundary topology, configurations and file I/O.

Mesh file format (ASCII, 0-based indices)::

    dim 2
    nodes 3
    0.0 0.0
    1.0 0.0
    0.0 1.0
    elements 1
    0 0 1 2

Each element line is ``<body_id> <n1> ... <n(d+1)>``.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError", "MeshParseError", "DegenerateElementError",
    "Mesh", "BoundaryInfo", "Configuration",
    "signed_volumes", "load_mesh", "save_mesh", "extract_boundary",
    "euler_characteristic", "merge_meshes", "write_snapshot", "read_snapshot",
]

VTK_CELL_TYPE = {2: 5, 3: 10}


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateElementError(MeshError):
    def __init__(self, element, volume):
        self.element = element
        self.volume = volume
        super().__init__(f"element {element} has non-positive volume {volume:.6g}")


def signed_volumes(x, elements):
    """Signed measure (area in 2D, volume in 3D) of each simplex."""
    x = np.asarray(x, dtype=float)
    elements = np.asarray(elements)
    d = x.shape[1]
    xe = x[elements]
    J = xe[:, 1:, :] - xe[:, :1, :]
    return np.linalg.det(J) / (2.0 if d == 2 else 6.0)


@dataclass
class Mesh:
    """Linear simplex mesh of one or more bodies.

    Attributes
    ----------
    nodes : ndarray (N, d)
        Reference coordinates.
    elements : ndarray (M, d+1)
        Connectivity, positively oriented.
    body : ndarray (M,)
        Body id of every element.
    """

    nodes: np.ndarray
    elements: np.ndarray
    body: np.ndarray
    node_body: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        self.body = np.ascontiguousarray(self.body, dtype=np.int64)
        self.validate()

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def bodies(self):
        return np.unique(self.body)

    def validate(self):
        nodes, elements, body = self.nodes, self.elements, self.body
        if nodes.ndim != 2 or nodes.shape[1] not in (2, 3):
            raise MeshError(f"nodes must have shape (N, 2) or (N, 3), got {nodes.shape}")
        d = nodes.shape[1]
        if elements.ndim != 2 or elements.shape[1] != d + 1:
            raise MeshError(f"elements must have {d + 1} nodes each")
        if body.shape != (elements.shape[0],):
            raise MeshError("one body id per element is required")
        if elements.size and (elements.min() < 0 or elements.max() >= nodes.shape[0]):
            bad = int(np.nonzero((elements < 0).any(1) | (elements >= nodes.shape[0]).any(1))[0][0])
            raise MeshError(f"element {bad} references a missing node")
        srt = np.sort(elements, axis=1)
        dup = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
        if dup.any():
            raise MeshError(f"element {int(np.nonzero(dup)[0][0])} repeats a node")
        vol = signed_volumes(nodes, elements)
        bad = np.nonzero(vol <= 0.0)[0]
        if bad.size:
            raise DegenerateElementError(int(bad[0]), float(vol[bad[0]]))

        node_body = np.full(nodes.shape[0], -1, dtype=np.int64)
        flat_nodes = elements.ravel()
        flat_body = np.repeat(body, d + 1)
        node_body[flat_nodes] = flat_body
        if (node_body[flat_nodes] != flat_body).any():
            k = int(np.nonzero(node_body[flat_nodes] != flat_body)[0][0])
            raise MeshError(f"node {int(flat_nodes[k])} is shared by elements of different bodies")
        orphan = np.nonzero(node_body < 0)[0]
        if orphan.size:
            raise MeshError(f"node {int(orphan[0])} belongs to no element")
        self.node_body = node_body

    def body_elements(self, b):
        return np.nonzero(self.body == b)[0]

    def body_nodes(self, b):
        return np.nonzero(self.node_body == b)[0]

    def edge_lengths(self, x=None):
        """Maximum edge length of every element in configuration ``x``."""
        x = self.nodes if x is None else x
        xe = x[self.elements]
        nen = xe.shape[1]
        best = np.zeros(len(xe))
        for a in range(nen):
            for b in range(a + 1, nen):
                best = np.maximum(best, np.linalg.norm(xe[:, a] - xe[:, b], axis=1))
        return best


@dataclass
class BoundaryInfo:
    """Exterior faces (edges in 2D) and exterior nodes.

    ``faces`` holds ``(element, local_face)`` pairs; local face ``k`` is the face
    opposite local node ``k``.
    """

    faces: np.ndarray
    face_nodes: np.ndarray
    exterior_nodes: dict

    @property
    def all_exterior_nodes(self):
        if not self.exterior_nodes:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(list(self.exterior_nodes.values())))


def _local_faces(nen):
    return [[j for j in range(nen) if j != k] for k in range(nen)]


def extract_boundary(mesh):
    """Exterior faces are those referenced by exactly one element."""
    elements = mesh.elements
    ne, nen = elements.shape
    local = _local_faces(nen)
    faces = elements[:, local].reshape(ne * nen, nen - 1)
    keys = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    ext = np.nonzero(counts[inverse] == 1)[0]
    # canonical order: by sorted node tuple
    order = np.lexsort(keys[ext].T[::-1])
    ext = ext[order]
    pairs = np.column_stack([ext // nen, ext % nen]).astype(np.int64)
    face_nodes = faces[ext]
    exterior = {}
    for b in mesh.bodies:
        sel = mesh.body[pairs[:, 0]] == b
        exterior[int(b)] = np.unique(face_nodes[sel])
    return BoundaryInfo(pairs, face_nodes, exterior)


def euler_characteristic(face_nodes):
    """V - E + F of a triangulated surface (3D meshes)."""
    face_nodes = np.asarray(face_nodes)
    if face_nodes.shape[1] != 3:
        raise MeshError("Euler characteristic needs triangular faces")
    V = np.unique(face_nodes).size
    edges = np.sort(face_nodes[:, [[0, 1], [1, 2], [0, 2]]].reshape(-1, 2), axis=1)
    E = np.unique(edges, axis=0).shape[0]
    return V - E + face_nodes.shape[0]


@dataclass
class Configuration:
    """Nodal displacements; the current configuration is ``nodes + u``."""

    displacements: np.ndarray

    @classmethod
    def zero(cls, mesh):
        return cls(np.zeros_like(mesh.nodes))

    def current(self, mesh):
        return mesh.nodes + self.displacements


def merge_meshes(parts):
    """Concatenate single-body meshes; part ``i`` becomes body ``i``.

    ``parts`` is a sequence of ``(nodes, elements)`` pairs or :class:`Mesh`.
    """
    nodes, elements, body = [], [], []
    offset = 0
    for i, part in enumerate(parts):
        if isinstance(part, Mesh):
            x, e = part.nodes, part.elements
        else:
            x, e = part
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=np.int64)
        nodes.append(x)
        elements.append(e + offset)
        body.append(np.full(len(e), i, dtype=np.int64))
        offset += len(x)
    return Mesh(np.vstack(nodes), np.vstack(elements), np.concatenate(body))


def _tokens(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if text:
                yield lineno, text.split()


def load_mesh(path):
    """Read a mesh file; see the module docstring for the format."""
    lines = _tokens(path)

    def header(keyword):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise MeshParseError(f"unexpected end of file, expected '{keyword}'") from None
        if len(tok) != 2 or tok[0] != keyword:
            raise MeshParseError(f"expected '{keyword} <n>'", lineno)
        try:
            return int(tok[1])
        except ValueError:
            raise MeshParseError(f"bad count {tok[1]!r}", lineno) from None

    d = header("dim")
    if d not in (2, 3):
        raise MeshParseError(f"dimension must be 2 or 3, got {d}", 1)
    n = header("nodes")
    nodes = np.empty((n, d))
    for i in range(n):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise MeshParseError(f"file ends after {i} of {n} nodes") from None
        if len(tok) != d:
            raise MeshParseError(f"node line needs {d} coordinates", lineno)
        try:
            nodes[i] = [float(t) for t in tok]
        except ValueError:
            raise MeshParseError("non-numeric coordinate", lineno) from None
    m = header("elements")
    elements = np.empty((m, d + 1), dtype=np.int64)
    body = np.empty(m, dtype=np.int64)
    for i in range(m):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise MeshParseError(f"file ends after {i} of {m} elements") from None
        if len(tok) != d + 2:
            raise MeshParseError(f"element line needs a body id and {d + 1} nodes", lineno)
        try:
            vals = [int(t) for t in tok]
        except ValueError:
            raise MeshParseError("non-integer element entry", lineno) from None
        body[i] = vals[0]
        elements[i] = vals[1:]
    extra = next(lines, None)
    if extra is not None:
        raise MeshParseError("trailing content after element block", extra[0])
    return Mesh(nodes, elements, body)


def save_mesh(mesh, path):
    d = mesh.dim
    with open(path, "w") as fh:
        fh.write(f"dim {d}\nnodes {mesh.n_nodes}\n")
        for x in mesh.nodes:
            fh.write(" ".join(repr(float(v)) for v in x) + "\n")
        fh.write(f"elements {mesh.n_elements}\n")
        for b, e in zip(mesh.body, mesh.elements):
            fh.write(f"{int(b)} " + " ".join(str(int(v)) for v in e) + "\n")


def write_snapshot(mesh, config, fields, path, vectors=None, title="adfcontact snapshot"):
    """Write a legacy VTK ASCII unstructured grid of the current configuration.

    Parameters
    ----------
    fields : dict of str -> ndarray (N,)
        Nodal scalars written as POINT_DATA.
    vectors : dict of str -> ndarray (N, d), optional
        Nodal vectors; padded to three components in 2D.
    """
    n = mesh.n_nodes
    fields = dict(fields or {})
    vectors = dict(vectors or {})
    for name, arr in fields.items():
        if np.shape(arr) != (n,):
            raise ValueError(f"field {name!r} has shape {np.shape(arr)}, expected ({n},)")
    for name, arr in vectors.items():
        if np.shape(arr) != (n, mesh.dim):
            raise ValueError(f"vector field {name!r} has shape {np.shape(arr)}, expected ({n}, {mesh.dim})")
    x = config.current(mesh) if config is not None else mesh.nodes
    if mesh.dim == 2:
        x = np.column_stack([x, np.zeros(n)])
    nen = mesh.elements.shape[1]
    out = [
        "# vtk DataFile Version 2.0",
        title.replace("\n", " "),
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    out.extend(" ".join(f"{v:.17g}" for v in p) for p in x)
    out.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (nen + 1)}")
    out.extend(f"{nen} " + " ".join(str(int(v)) for v in e) for e in mesh.elements)
    out.append(f"CELL_TYPES {mesh.n_elements}")
    out.extend([str(VTK_CELL_TYPE[mesh.dim])] * mesh.n_elements)
    out.append(f"CELL_DATA {mesh.n_elements}")
    out.append("SCALARS body int 1")
    out.append("LOOKUP_TABLE default")
    out.extend(str(int(b)) for b in mesh.body)
    if fields or vectors:
        out.append(f"POINT_DATA {n}")
    for name, arr in fields.items():
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out.extend(f"{v:.17g}" for v in np.asarray(arr, dtype=float))
    for name, arr in vectors.items():
        arr = np.asarray(arr, dtype=float)
        if mesh.dim == 2:
            arr = np.column_stack([arr, np.zeros(n)])
        out.append(f"VECTORS {name} double")
        out.extend(" ".join(f"{v:.17g}" for v in row) for row in arr)
    Path(path).write_text("\n".join(out) + "\n")


def read_snapshot(path):
    """Parse a file written by :func:`write_snapshot`.

    Returns a dict with ``points`` (N, 3), ``cells`` (M, nen), ``cell_types``,
    ``point_data`` (name -> array) and ``cell_data``.
    """
    tok = Path(path).read_text().split("\n")
    i = 0
    out = {"point_data": {}, "cell_data": {}}
    section = None
    while i < len(tok):
        line = tok[i].strip()
        parts = line.split()
        if not parts:
            i += 1
            continue
        key = parts[0]
        if key == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([[float(v) for v in tok[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        elif key == "CELLS":
            m = int(parts[1])
            out["cells"] = np.array([[int(v) for v in tok[i + 1 + k].split()[1:]] for k in range(m)])
            i += m + 1
        elif key == "CELL_TYPES":
            m = int(parts[1])
            out["cell_types"] = np.array([int(tok[i + 1 + k]) for k in range(m)])
            i += m + 1
        elif key in ("POINT_DATA", "CELL_DATA"):
            section = "point_data" if key == "POINT_DATA" else "cell_data"
            count = int(parts[1])
            i += 1
        elif key == "SCALARS":
            name = parts[1]
            vals = [float(tok[i + 2 + k]) for k in range(count)]
            out[section][name] = np.array(vals)
            i += count + 2
        elif key == "VECTORS":
            name = parts[1]
            out[section][name] = np.array([[float(v) for v in tok[i + 1 + k].split()] for k in range(count)])
            i += count + 1
        else:
            i += 1
    return out
