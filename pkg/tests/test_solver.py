import io

import numpy as np
import pytest

from adfcontact.contact import ContactParams
from adfcontact.fem import SingularSystemError
from adfcontact.generators import patch_test_scene, rectangle
from adfcontact.material import MaterialParams
from adfcontact.mesh import merge_meshes
from adfcontact.solver import (
    DirichletBC, NodalLoad, Problem, Solver, SolverParams, SolverState,
    StepFailure, step_control, write_log,
)

from scenes import single

MAT = MaterialParams(1e4, 0.3)


def side(mesh, axis, value, body=None):
    hit = np.isclose(mesh.nodes[:, axis], value)
    if body is not None:
        hit &= mesh.node_body == body
    return np.nonzero(hit)[0]


def stretch_problem(contact=None, load=0.05):
    mesh = single(*rectangle(0.0, 0.0, 1.0, 0.2, 10, 2))
    left, right = side(mesh, 0, 0.0), side(mesh, 0, 1.0)
    bcs = [DirichletBC("left", left, 0, 0.0), DirichletBC("pin", left[:1], 1, 0.0),
           DirichletBC("right", right, 0, load)]
    return Problem(mesh, {0: MAT}, dirichlet=bcs, contact=contact)


def press_problem(depth=0.01, damping=0.0):
    """Deformable block pressed onto a rigid one across a non-matching interface."""
    mesh = patch_test_scene(0.25, 1.0 / 3.0)
    top = side(mesh, 1, 1.0, body=1)
    sides = np.nonzero((mesh.node_body == 1) & (np.isclose(mesh.nodes[:, 0], 0.0)
                                                 | np.isclose(mesh.nodes[:, 0], 1.0)))[0]
    return Problem(mesh, {1: MAT}, rigid={0},
                   dirichlet=[DirichletBC("top", top, 1, -depth), DirichletBC("sides", sides, 0, 0.0)],
                   contact=ContactParams(1e7, 0.3), damping=damping)


def test_problem_validation():
    mesh = merge_meshes([rectangle(0, 0, 1, 1, 1, 1), rectangle(2, 0, 3, 1, 1, 1)])
    with pytest.raises(ValueError, match="neither material"):
        Problem(mesh, {0: MAT})
    with pytest.raises(ValueError, match="selects no nodes"):
        Problem(mesh, {0: MAT, 1: MAT}, dirichlet=[DirichletBC("none", [], 0, 0.0)])
    p = Problem(mesh, {0: MAT}, rigid={1})
    assert p.damped_bodies == {0} and p.incident_bodies == {0, 1}
    with pytest.raises(ValueError):
        SolverParams(dt=0.1, dt_max=0.01)


def test_step_control_cut_and_growth():
    p = SolverParams(dt=0.1, dt_max=0.15)
    assert step_control(0.1, 3, False, p) == (0.05, 0)
    dt, streak = 0.1, 0
    for _ in range(4):
        dt, streak = step_control(dt, streak, True, p)
    assert (dt, streak) == (0.1, 4)
    dt, streak = step_control(dt, streak, True, p)
    assert dt == pytest.approx(0.12) and streak == 0
    for _ in range(10):
        dt, streak = step_control(dt, streak, True, p)
    assert dt == pytest.approx(0.15)


def test_contact_free_run_is_unaffected_by_contact_machinery():
    params = SolverParams(dt=0.25)
    plain = Solver(stretch_problem(None), params).run()
    with_contact = Solver(stretch_problem(ContactParams(1e6, 0.05)), params).run()
    assert plain.completed and with_contact.completed
    np.testing.assert_array_equal(plain.state.u, with_contact.state.u)
    assert all(r.n_contacts == 0 for r in with_contact.results)


def test_small_load_converges_quadratically():
    run = Solver(stretch_problem(load=1e-4), SolverParams(dt=1.0)).run()
    assert run.completed
    assert run.results[0].iterations <= 3
    big = Solver(stretch_problem(load=0.1), SolverParams(dt=1.0)).run()
    res = big.results[0].residuals[1:]
    assert len(res) >= 3
    # quadratic: r_{k+1} <= C r_k**2 with one constant across iterations
    ratios = [res[k + 1] / res[k] ** 2 for k in range(len(res) - 1)]
    assert max(ratios) < 1e-3


def test_reactions_balance_nodal_load():
    mesh = single(*rectangle(0.0, 0.0, 1.0, 0.2, 10, 2))
    left, right = side(mesh, 0, 0.0), side(mesh, 0, 1.0)
    force = np.tile([0.0, -1.0], (right.size, 1))
    prob = Problem(mesh, {0: MAT}, dirichlet=[DirichletBC("left", left, 0, 0.0), DirichletBC("lefty", left, 1, 0.0)],
                   loads=[NodalLoad("tip", right, force)])
    run = Solver(prob, SolverParams(dt=0.5)).run()
    assert run.completed
    r = run.results[-1].reactions
    # both conditions act on the same nodes and report the same resultant
    np.testing.assert_array_equal(r["left"], r["lefty"])
    np.testing.assert_allclose(r["left"], [0.0, float(right.size)], atol=1e-6)


def test_floating_body_needs_damping():
    # sides are held in x only; with no contact the block floats in y
    def floating(c):
        prob = press_problem(damping=c)
        top = prob.dirichlet[0].nodes
        prob.dirichlet = [bc for bc in prob.dirichlet if bc.name == "sides"]
        prob.loads = [NodalLoad("push", top, np.tile([0.0, -1.0], (top.size, 1)))]
        solver = Solver(prob, SolverParams(dt=1.0))
        u = solver.initial_state().u
        return solver.newton_solve(u, u, 1.0, 1.0, [], solver.solve_phi(u), np.zeros(0))

    with pytest.raises(SingularSystemError):
        floating(0.0)
    res = floating(40.0)
    assert res.converged and res.iterations <= 2


def test_abort_at_minimum_step_returns_last_state(monkeypatch):
    solver = Solver(stretch_problem(), SolverParams(dt=0.1, dt_min=0.01))
    calls = []

    def fail(state, dt):
        calls.append(dt)
        raise StepFailure("forced")

    monkeypatch.setattr(solver, "attempt_step", fail)
    run = solver.run()
    assert not run.completed and "minimum step size" in run.message
    assert calls == pytest.approx([0.1, 0.05, 0.025, 0.0125])
    assert run.state.lam == 0.0 and run.results == []


def test_pressing_run_rebuilds_and_equilibrates():
    solver = Solver(press_problem(), SolverParams(dt=0.25))
    run = solver.run()
    assert run.completed and run.rebuilds > 0
    last = run.results[-1]
    assert last.n_contacts > 0 and last.v_max > 0.0
    assert max(r.equilibrium_error for r in run.results) <= 1e-12
    # the rigid body carries what the top face pushes down
    assert last.reactions["body0"][1] == pytest.approx(-last.reactions["top"][1], rel=1e-6)


def test_phi_and_pairs_are_frozen_within_newton(monkeypatch):
    solver = Solver(press_problem(), SolverParams(dt=0.25))
    phi_calls, detect_calls = [], []
    orig_phi, orig_detect = solver.solve_phi, solver.detect
    monkeypatch.setattr(solver, "solve_phi", lambda u: phi_calls.append(1) or orig_phi(u))
    monkeypatch.setattr(solver, "detect", lambda *a: detect_calls.append(1) or orig_detect(*a))
    run = solver.run()
    assert len(phi_calls) == run.attempts
    # one detection on the trial state and one after each Newton solve
    assert len(detect_calls) == sum(2 + r.target_retries for r in run.results)


def test_restart_is_bit_identical(tmp_path):
    params = SolverParams(dt=0.1)
    full = Solver(press_problem(), params).run()
    first = Solver(press_problem(), params).run(max_steps=5)
    first.state.save(tmp_path / "state.npz")
    state = SolverState.load(tmp_path / "state.npz")
    rest = Solver(press_problem(), params).run(state)
    assert full.completed and rest.completed
    np.testing.assert_array_equal(rest.state.u, full.state.u)
    assert [r.v_max for r in rest.results] == [r.v_max for r in full.results[5:]]
    assert [r.residuals for r in rest.results] == [r.residuals for r in full.results[5:]]


def test_state_roundtrip(tmp_path):
    s = SolverState(0.3, 0.01, np.arange(6.0).reshape(3, 2), 4, 2, ((1, 2), (3, 4)), [0.1, 0.2])
    s.save(tmp_path / "s.npz")
    t = SolverState.load(tmp_path / "s.npz")
    assert (t.lam, t.dt, t.step, t.streak, t.assignments, t.v_max) == (0.3, 0.01, 4, 2, ((1, 2), (3, 4)), [0.1, 0.2])
    np.testing.assert_array_equal(t.u, s.u)


def test_write_log_columns():
    run = Solver(press_problem(), SolverParams(dt=0.5)).run()
    buf = io.StringIO()
    write_log(run.results, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == ("step,lambda,dt,iterations,v_max,contacts,rebuilt,target_retries,"
                        "body0_Rx,body0_Ry,sides_Rx,sides_Ry,top_Rx,top_Ry")
    assert len(lines) == 1 + len(run.results)
