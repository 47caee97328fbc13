"""Batch front end: ``adfcontact run | verify-adf | patch-test``."""

import argparse
import logging
import os
import sys

import numpy as np

from . import adf
from .mesh import Configuration, write_snapshot
from .scenario import ScenarioError, build_problem, parse_scenario
from .solver import Solver, write_log

__all__ = ["main", "run_scenario", "patch_test", "summary_lines"]

log = logging.getLogger("adfcontact")


def _fmt(v):
    return repr(float(v))


def summary_lines(run, solver):
    """Deterministic ``key = value`` summary of a finished run."""
    res = run.results
    lines = [
        f"completed = {str(run.completed).lower()}",
        f"steps = {len(res)}",
        f"attempts = {run.attempts}",
        f"final_lambda = {_fmt(run.state.lam)}",
        f"final_v_max = {_fmt(res[-1].v_max if res else 0.0)}",
        f"max_v_max = {_fmt(max((r.v_max for r in res), default=0.0))}",
        f"total_newton_iterations = {sum(r.iterations for r in res)}",
        f"median_newton_iterations = {_fmt(np.median([r.iterations for r in res]) if res else 0.0)}",
        f"connectivity_rebuilds = {run.rebuilds}",
        f"max_equilibrium_error = {_fmt(max((r.equilibrium_error for r in res), default=0.0))}",
        f"l_c = {_fmt(solver.problem.contact.l_c)}",
        f"kappa = {_fmt(solver.problem.contact.kappa)}",
    ]
    if res:
        for name in sorted(res[0].reactions):
            peak = np.max(np.abs([r.reactions[name] for r in res]), axis=0)
            lines.append(f"peak_reaction_{name} = " + " ".join(_fmt(v) for v in peak))
    if run.message:
        lines.append(f"message = {run.message}")
    return lines


def _snapshot(solver, state, path):
    mesh = solver.mesh
    fields = {}
    if solver.last_contact is not None and solver.last_contact[2] is not None:
        phi = solver.last_contact[2]
        fields["phi"] = phi.phi
        fields["gap"] = adf.nodal_gap(phi)
    write_snapshot(mesh, Configuration(state.u), fields, path, vectors={"displacement": state.u})


def run_scenario(source, out, overrides=(), snapshots=None, backend=None, stream=None):
    """Run one scenario into directory ``out``; returns the exit code."""
    stream = stream or sys.stdout
    scenario = parse_scenario(source, overrides)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "effective.cfg"), "w") as fh:
        fh.write(scenario.text)
    problem, params = build_problem(scenario)
    solver = Solver(problem, params, backend)
    every = scenario.snapshots if snapshots is None else snapshots

    def callback(state, result):
        if every and result.step % every == 0:
            _snapshot(solver, state, os.path.join(out, f"step_{result.step:05d}.vtk"))

    run = solver.run(callback=callback)
    if run.results:
        write_log(run.results, os.path.join(out, "log.csv"))
        _snapshot(solver, run.state, os.path.join(out, f"step_{run.results[-1].step:05d}.vtk"))
    lines = summary_lines(run, solver)
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"{out}: " + ", ".join(lines[:5]), file=stream)
    return 0 if run.completed else 1


def _cmd_run(args):
    if args.sweep:
        key, _, values = args.sweep.partition("=")
        if not values:
            raise ScenarioError("--sweep expects section.key=v1,v2,...")
        code = 0
        for v in values.split(","):
            out = os.path.join(args.out, f"{key}={v}")
            code = max(code, run_scenario(args.scenario, out, list(args.override) + [f"{key}={v}"],
                                          args.snapshots, args.backend))
        return code
    return run_scenario(args.scenario, args.out, args.override, args.snapshots, args.backend)


def _cmd_verify(args):
    if args.geometry == "strip":
        mesh, bnd, exact, sample = adf.strip_problem(args.h if args.h else 0.01)
    else:
        mesh, bnd, exact, sample = adf.disk_problem(args.h if args.h else 0.005)
    h = args.h if args.h else (0.01 if args.geometry == "strip" else 0.005)
    rows = adf.varadhan_limit_check(mesh, bnd, args.lc, exact, sample, args.normalization, h=h)
    lines = ["l_c,max_error,below_mesh"] + [f"{_fmt(r['l_c'])},{_fmt(r['max_error'])},{int(r['below_mesh'])}"
                                            for r in rows]
    print("\n".join(lines))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"verify_{args.geometry}.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0


def patch_test(weighting="edge_projection", kappa=1e7, l_c=0.1, h_top=0.1, h_bottom=1.0 / 7.0,
               E=1e4, nu=0.3, depth=0.01, backend=None):
    """Two-block contact patch test; returns ``(x, tractions, solver, run)``.

    The lower block is rigid, the upper block is compressed by a uniform top
    displacement with rollers on its sides, and only upper-block nodes are
    incident. Unweighted runs use ``kappa`` times the mean interface spacing
    so that both modes carry comparable penalties.
    """
    from .contact import ContactParams
    from .generators import patch_test_scene
    from .material import MaterialParams
    from .solver import DirichletBC, Problem, SolverParams

    mesh = patch_test_scene(h_top, h_bottom)
    X = mesh.nodes
    upper = mesh.node_body == 1
    top = np.nonzero(upper & np.isclose(X[:, 1], 1.0))[0]
    sides = np.nonzero(upper & (np.isclose(X[:, 0], 0.0) | np.isclose(X[:, 0], 1.0)))[0]
    k = kappa if weighting == "edge_projection" else kappa * h_top
    problem = Problem(mesh, {1: MaterialParams(E, nu)}, rigid={0},
                      dirichlet=[DirichletBC("top", top, 1, -depth), DirichletBC("sides", sides, 0, 0.0)],
                      contact=ContactParams(k, l_c, weighting=weighting), incident_bodies={1})
    solver = Solver(problem, SolverParams(dt=0.25), backend)
    run = solver.run()
    nodes, t = solver.interface_tractions()
    order = np.argsort(X[nodes, 0], kind="stable")
    return X[nodes[order], 0], t[order], solver, run


def _cmd_patch(args):
    modes = ["edge_projection", "none"] if args.weighting == "both" else [args.weighting]
    lines = ["weighting,x,traction"]
    report = []
    for mode in modes:
        x, t, _, run = patch_test(mode, kappa=args.kappa, l_c=args.lc)
        dev = float(np.max(np.abs(t - t.mean())) / t.mean())
        report.append(f"{mode}: max relative deviation {dev:.4f} over {t.size} nodes "
                      f"({'completed' if run.completed else 'aborted'})")
        lines += [f"{mode},{_fmt(a)},{_fmt(b)}" for a, b in zip(x, t)]
    print("\n".join(report))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "patch_test.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        with open(os.path.join(args.out, "summary.txt"), "w") as fh:
            fh.write("\n".join(report) + "\n")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="adfcontact", description="Finite-strain contact with distance-function gaps.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log step failures and retries")
    ap.add_argument("--backend", choices=["cython", "python"], default=None, help="kernel backend")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file or built-in scenario")
    r.add_argument("scenario")
    r.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
    r.add_argument("--out", default="run")
    r.add_argument("--snapshots", type=int, default=None, metavar="N", help="snapshot every N steps")
    r.add_argument("--sweep", default=None, metavar="SECTION.KEY=V1,V2,...",
                   help="run once per value into OUT/SECTION.KEY=V")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("verify-adf", help="compare the distance function to an exact distance")
    v.add_argument("--geometry", choices=["strip", "disk"], default="strip")
    v.add_argument("--lc", type=float, action="append", required=True)
    v.add_argument("--h", type=float, default=None)
    v.add_argument("--normalization", choices=list(adf.NORMALIZATIONS), default="sqrt")
    v.add_argument("--out", default=None)
    v.set_defaults(func=_cmd_verify)

    p = sub.add_parser("patch-test", help="two-block contact patch test")
    p.add_argument("--weighting", choices=["edge_projection", "none", "both"], default="both")
    p.add_argument("--kappa", type=float, default=1e7)
    p.add_argument("--lc", type=float, default=0.1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_patch)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
