"""Scenario files: sectioned ``key = value`` text describing a contact run.

Sections
--------
``[mesh]``
    ``h``: default element size for generated bodies.
``[body.NAME]``
    One per body, in file order (the order fixes the body ids). ``shape``
    selects a generator (``rectangle``, ``u_channel``, ``polygon``, ``disk``,
    ``box``, ``cylinder``, ``cone``, ``wedge``) or ``file`` with ``mesh = path``.
    Material: ``E``, ``nu``, or ``rigid = true``. ``damped`` overrides the
    default (every deformable body is damped when ``solver.damping > 0``).
``[bc.NAME]``
    ``body``, ``where`` (``top``, ``bottom``, ``left``, ``right``, ``front``,
    ``back``, ``all``; top and bottom refer to the last axis, front and back
    to y in 3D) and any of ``ux``, ``uy``, ``uz`` (displacement at
    ``lambda = 1``) or ``pressure`` (normal traction at ``lambda = 1``).
``[contact]``
    ``kappa``, ``l_c``, ``sign``, ``weighting``, ``gap_normalization``,
    ``incident_bodies`` (comma-separated body names, default all).
``[solver]``
    Step control and tolerances, see :class:`~adfcontact.solver.SolverParams`,
    plus ``damping``.
``[output]``
    ``snapshots``: write a VTK snapshot every that many steps (0 = final only).
"""

import configparser
import io
import math
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import generators
from .contact import ContactParams
from .material import MaterialParams
from .mesh import extract_boundary, load_mesh, merge_meshes
from .solver import DirichletBC, NodalLoad, Problem, SolverParams

__all__ = ["ScenarioError", "Scenario", "parse_scenario", "build_problem", "builtin_scenarios",
           "builtin_path", "apply_overrides"]


class ScenarioError(ValueError):
    pass


_SHAPE_KEYS = {
    "rectangle": {"box"},
    "u_channel": {"box", "wall"},
    "polygon": {"center", "radius", "sides", "rotation"},
    "disk": {"center", "radius"},
    "box": {"box"},
    "cylinder": {"base", "radius", "length", "axis"},
    "cone": {"base", "radius", "height"},
    "wedge": {"base", "radius", "width", "angle"},
    "file": {"mesh"},
}
_BODY_KEYS = {"shape", "h", "E", "nu", "rigid", "damped"}
_BC_KEYS = {"body", "where", "ux", "uy", "uz", "pressure"}
_CONTACT_KEYS = {"kappa": float, "l_c": float, "sign": str, "weighting": str,
                 "gap_normalization": str, "incident_bodies": str}
_SOLVER_KEYS = {"dt": float, "dt_min": float, "dt_max": float, "t_end": float, "tol_abs": float,
                "tol_rel": float, "max_iter": int, "divergence_window": int, "grow_after": int,
                "grow_factor": float, "cut_factor": float, "target_retries": int,
                "max_backtracks": int, "target_hysteresis": float, "phi_per_iteration": bool,
                "damping": float}
_OUTPUT_KEYS = {"snapshots": int}
# axis -1 is the last coordinate (y in 2D, z in 3D)
_SIDES = {"left": (0, min), "right": (0, max), "bottom": (-1, min), "top": (-1, max),
          "front": (1, min), "back": (1, max)}


@dataclass
class BodySpec:
    name: str
    shape: str
    params: dict
    h: float
    material: MaterialParams = None
    rigid: bool = False
    damped: bool = None


@dataclass
class BCSpec:
    name: str
    body: str
    where: str
    values: dict
    pressure: float = None


@dataclass
class Scenario:
    bodies: list
    bcs: list
    contact: ContactParams
    solver: SolverParams
    damping: float
    incident_bodies: list
    snapshots: int = 0
    text: str = ""
    base_dir: str = "."
    body_ids: dict = field(default_factory=dict)


def builtin_scenarios():
    root = resources.files("adfcontact") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def builtin_path(name):
    path = resources.files("adfcontact") / "scenarios" / f"{name}.cfg"
    if not path.is_file():
        raise ScenarioError(f"no built-in scenario called {name!r}")
    return str(path)


def _parser():
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def apply_overrides(cp, overrides):
    """Apply ``section.key=value`` strings to a parsed config in place."""
    for item in overrides:
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not of the form section.key=value")
        lhs, value = item.split("=", 1)
        if "." not in lhs:
            raise ScenarioError(f"override {item!r} does not name a section")
        section, key = lhs.strip().rsplit(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value.strip())


def _floats(text, n, key):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ScenarioError(f"{key}: expected {n} numbers, got {text!r}") from None
    if len(vals) != n:
        raise ScenarioError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def _number(section, key, text, kind=float):
    try:
        if kind is bool:
            low = text.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        return kind(text)
    except ValueError:
        raise ScenarioError(f"[{section}] {key}: cannot read {text!r} as {kind.__name__}") from None


def _check_keys(section, keys, allowed):
    unknown = sorted(set(keys) - set(allowed))
    if unknown:
        raise ScenarioError(f"[{section}] unknown key(s): {', '.join(unknown)}")


def parse_scenario(source, overrides=(), base_dir=None):
    """Parse and validate a scenario from a path, a built-in name or text.

    ``overrides`` are applied before validation.
    """
    cp = _parser()
    if isinstance(source, str) and "\n" not in source and not os.path.exists(source) \
            and not source.endswith(".cfg"):
        source = builtin_path(source)
    if isinstance(source, str) and "\n" not in source:
        if not os.path.exists(source):
            raise ScenarioError(f"scenario file {source!r} does not exist")
        with open(source) as fh:
            text = fh.read()
        base_dir = base_dir or os.path.dirname(os.path.abspath(source))
    else:
        text = source
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"cannot parse scenario: {exc}") from None
    apply_overrides(cp, overrides)
    base_dir = base_dir or os.getcwd()

    known = {"mesh", "contact", "solver", "output"}
    for sec in cp.sections():
        if sec not in known and not sec.startswith(("body.", "bc.")):
            raise ScenarioError(f"unknown section [{sec}]")

    h_default = None
    if cp.has_section("mesh"):
        _check_keys("mesh", cp["mesh"], {"h"})
        if "h" in cp["mesh"]:
            h_default = _number("mesh", "h", cp["mesh"]["h"])

    bodies = []
    for sec in cp.sections():
        if not sec.startswith("body."):
            continue
        name = sec[5:]
        s = cp[sec]
        shape = s.get("shape", "file" if "mesh" in s else None)
        if shape not in _SHAPE_KEYS:
            raise ScenarioError(f"[{sec}] shape must be one of {sorted(_SHAPE_KEYS)}, got {shape!r}")
        _check_keys(sec, s, _BODY_KEYS | _SHAPE_KEYS[shape])
        h = _number(sec, "h", s["h"]) if "h" in s else h_default
        if shape != "file" and (h is None or not h > 0.0):
            raise ScenarioError(f"[{sec}] needs a positive h (or [mesh] h)")
        rigid = _number(sec, "rigid", s.get("rigid", "false"), bool)
        material = None
        if not rigid:
            for key in ("E", "nu"):
                if key not in s:
                    raise ScenarioError(f"[{sec}] deformable body needs {key}")
            try:
                material = MaterialParams(_number(sec, "E", s["E"]), _number(sec, "nu", s["nu"]))
            except ValueError as exc:
                raise ScenarioError(f"[{sec}] {exc}") from None
        damped = _number(sec, "damped", s["damped"], bool) if "damped" in s else None
        params = {k: s[k] for k in _SHAPE_KEYS[shape] if k in s}
        if shape == "file":
            path = params.get("mesh")
            if path is None:
                raise ScenarioError(f"[{sec}] needs mesh = <path>")
            path = path if os.path.isabs(path) else os.path.join(base_dir, path)
            if not os.path.exists(path):
                raise ScenarioError(f"[{sec}] mesh file {path!r} does not exist")
            params["mesh"] = path
        bodies.append(BodySpec(name, shape, params, h, material, rigid, damped))
    if not bodies:
        raise ScenarioError("scenario defines no [body.*] sections")
    body_ids = {b.name: i for i, b in enumerate(bodies)}

    bcs = []
    for sec in cp.sections():
        if not sec.startswith("bc."):
            continue
        s = cp[sec]
        _check_keys(sec, s, _BC_KEYS)
        body = s.get("body")
        if body not in body_ids:
            raise ScenarioError(f"[{sec}] body must name a [body.*] section, got {body!r}")
        where = s.get("where", "all")
        if where not in _SIDES and where != "all":
            raise ScenarioError(f"[{sec}] where must be one of {sorted(_SIDES) + ['all']}, got {where!r}")
        values = {"xyz".index(k[1]): _number(sec, k, s[k]) for k in ("ux", "uy", "uz") if k in s}
        pressure = _number(sec, "pressure", s["pressure"]) if "pressure" in s else None
        if not values and pressure is None:
            raise ScenarioError(f"[{sec}] prescribes nothing (give ux/uy/uz or pressure)")
        if pressure is not None and where == "all":
            raise ScenarioError(f"[{sec}] pressure needs a side in 'where'")
        bcs.append(BCSpec(sec[3:], body, where, values, pressure))

    if not cp.has_section("contact"):
        raise ScenarioError("scenario needs a [contact] section")
    c = cp["contact"]
    _check_keys("contact", c, _CONTACT_KEYS)
    for key in ("kappa", "l_c"):
        if key not in c:
            raise ScenarioError(f"[contact] {key} is required")
    sign = c.get("sign", "+").strip()
    if sign not in ("+", "-", "+1", "-1", "1"):
        raise ScenarioError(f"[contact] sign must be + or -, got {sign!r}")
    try:
        contact = ContactParams(_number("contact", "kappa", c["kappa"]), _number("contact", "l_c", c["l_c"]),
                                -1 if sign.startswith("-") else 1, c.get("weighting", "none"),
                                c.get("gap_normalization", "sqrt"))
    except ValueError as exc:
        raise ScenarioError(f"[contact] {exc}") from None
    incident = [v.strip() for v in c.get("incident_bodies", "").split(",") if v.strip()]
    for name in incident:
        if name not in body_ids:
            raise ScenarioError(f"[contact] incident_bodies names unknown body {name!r}")

    sv = {}
    if cp.has_section("solver"):
        _check_keys("solver", cp["solver"], _SOLVER_KEYS)
        sv = {k: _number("solver", k, v, _SOLVER_KEYS[k]) for k, v in cp["solver"].items()}
    damping = sv.pop("damping", 0.0)
    if damping < 0.0:
        raise ScenarioError("[solver] damping must be non-negative")
    try:
        solver = SolverParams(**sv)
    except ValueError as exc:
        raise ScenarioError(f"[solver] {exc}") from None

    snapshots = 0
    if cp.has_section("output"):
        _check_keys("output", cp["output"], _OUTPUT_KEYS)
        if "snapshots" in cp["output"]:
            snapshots = _number("output", "snapshots", cp["output"]["snapshots"], int)

    buf = io.StringIO()
    cp.write(buf)
    return Scenario(bodies, bcs, contact, solver, damping, incident, snapshots, buf.getvalue(),
                    base_dir, body_ids)


def _generate(spec):
    p, h = spec.params, spec.h
    shape = spec.shape
    if shape == "rectangle":
        x0, y0, x1, y1 = _floats(p["box"], 4, "box")
        return generators._rect_h(x0, y0, x1, y1, h)
    if shape == "u_channel":
        x0, y0, x1, y1 = _floats(p["box"], 4, "box")
        return generators.u_channel(x0, y0, x1 - x0, y1 - y0, float(p["wall"]), h)
    if shape == "polygon":
        return generators.regular_polygon(_floats(p["center"], 2, "center"), float(p["radius"]),
                                          int(p["sides"]), h, math.radians(float(p.get("rotation", 0.0))))
    if shape == "disk":
        return generators.disk(float(p["radius"]), h, _floats(p.get("center", "0 0"), 2, "center"))
    if shape == "box":
        v = _floats(p["box"], 6, "box")
        n = [max(1, int(math.ceil((v[k + 3] - v[k]) / h - 1e-9))) for k in range(3)]
        return generators.box(v[:3], v[3:], n)
    if shape == "cylinder":
        return generators.cylinder(_floats(p["base"], 3, "base"), float(p["radius"]), float(p["length"]),
                                   h, int(p.get("axis", 0)))
    if shape == "cone":
        return generators.cone(_floats(p["base"], 3, "base"), float(p["radius"]), float(p["height"]), h)
    if shape == "wedge":
        return generators.wedge(_floats(p["base"], 3, "base"), float(p["radius"]), float(p["width"]),
                                float(p["angle"]), h)
    mesh = load_mesh(p["mesh"])
    return mesh.nodes, mesh.elements


def _side_nodes(mesh, body, where):
    nodes = mesh.body_nodes(body)
    if where == "all":
        return nodes
    axis, pick = _SIDES[where]
    if where in ("front", "back") and mesh.dim == 2:
        raise ScenarioError(f"side {where!r} does not exist in 2D")
    axis = axis % mesh.dim
    coord = mesh.nodes[nodes, axis]
    span = float(coord.max() - coord.min()) or 1.0
    target = pick(coord)
    return nodes[np.abs(coord - target) <= 1e-9 * span]


def build_problem(scenario):
    """Generate the mesh and assemble :class:`~adfcontact.solver.Problem` and parameters."""
    parts = [_generate(b) for b in scenario.bodies]
    dims = {np.asarray(p[0]).shape[1] for p in parts}
    if len(dims) != 1:
        raise ScenarioError("all bodies must have the same dimension")
    mesh = merge_meshes(parts)
    ids = scenario.body_ids
    materials = {ids[b.name]: b.material for b in scenario.bodies if not b.rigid}
    rigid = {ids[b.name] for b in scenario.bodies if b.rigid}
    damped = {ids[b.name] for b in scenario.bodies
              if not b.rigid and (b.damped if b.damped is not None else True)}
    dirichlet, loads = [], []
    boundary = None
    for bc in scenario.bcs:
        nodes = _side_nodes(mesh, ids[bc.body], bc.where)
        if nodes.size == 0:
            raise ScenarioError(f"[bc.{bc.name}] selects no nodes")
        for comp, value in sorted(bc.values.items()):
            if comp >= mesh.dim:
                raise ScenarioError(f"[bc.{bc.name}] component {'xyz'[comp]} does not exist in {mesh.dim}D")
            dirichlet.append(DirichletBC(bc.name, nodes, comp, value))
        if bc.pressure is not None:
            if boundary is None:
                boundary = extract_boundary(mesh)
            axis, pick = _SIDES[bc.where]
            axis = axis % mesh.dim
            outward = 1.0 if pick is max else -1.0
            sel = np.zeros(mesh.n_nodes, dtype=bool)
            sel[nodes] = True
            fn = boundary.face_nodes[sel[boundary.face_nodes].all(axis=1)]
            forces = np.zeros((mesh.n_nodes, mesh.dim))
            x = mesh.nodes
            if mesh.dim == 2:
                meas = np.linalg.norm(x[fn[:, 1]] - x[fn[:, 0]], axis=1)
            else:
                meas = 0.5 * np.linalg.norm(np.cross(x[fn[:, 1]] - x[fn[:, 0]], x[fn[:, 2]] - x[fn[:, 0]]), axis=1)
            k = fn.shape[1]
            np.add.at(forces[:, axis], fn.ravel(), np.repeat(-outward * bc.pressure * meas / k, k))
            loads.append(NodalLoad(bc.name, nodes, forces[nodes]))
    incident = {ids[n] for n in scenario.incident_bodies} or None
    problem = Problem(mesh, materials, rigid, dirichlet, loads, scenario.contact, scenario.damping,
                      frozenset(damped), frozenset(incident) if incident else None)
    return problem, scenario.solver
