"""Staggered quasi-static contact solver.

Each load step advances the factor ``lambda`` by ``dt`` and then:

1. prescribes the driven displacements at the new ``lambda``;
2. solves the potential ``phi`` of every body on that trial configuration;
3. detects incident-node/target pairs and rebuilds the sparse pattern when the
   set changed;
4. runs Newton on the displacements with ``phi`` and the pairs frozen;
5. re-detects on the converged configuration and repeats 4 if the pairs
   changed, up to ``target_retries`` times.

A failed step (divergence, inverted elements, singular system, too many
target changes) is retried with half the step. After ``grow_after``
consecutive accepted steps the step grows by ``grow_factor`` up to ``dt_max``.
"""

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import adf, contact, detection
from .fem import LinearSolveError, SingularSystemError, SparseSystem, eliminate_dirichlet, solve_linear
from .material import ContinuumModel, InvertedElementError
from .mesh import DegenerateElementError, extract_boundary

__all__ = [
    "StepFailure", "SolverAbort", "NewtonDivergence", "DirichletBC", "NodalLoad",
    "Problem", "SolverParams", "SolverState", "NewtonResult", "StepResult",
    "RunResult", "Solver", "step_control", "write_log",
]

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    pass


class NewtonDivergence(StepFailure):
    pass


class SolverAbort(RuntimeError):
    """The step size fell below ``dt_min``; ``state`` is the last accepted state."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


@dataclass
class DirichletBC:
    """``u[nodes, component] = lambda * value``."""

    name: str
    nodes: np.ndarray
    component: int
    value: float


@dataclass
class NodalLoad:
    """External force ``lambda * forces`` (n, d) on ``nodes``."""

    name: str
    nodes: np.ndarray
    forces: np.ndarray


@dataclass
class Problem:
    """Mesh, materials and boundary data of a contact problem.

    ``materials`` maps the id of every deformable body to its
    :class:`~adfcontact.material.MaterialParams`; bodies in ``rigid`` have all
    their nodes held (at zero unless a Dirichlet condition moves them).
    """

    mesh: object
    materials: dict
    rigid: frozenset = frozenset()
    dirichlet: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    contact: object = None
    damping: float = 0.0
    damped_bodies: frozenset = None
    incident_bodies: frozenset = None

    def __post_init__(self):
        self.rigid = frozenset(int(b) for b in self.rigid)
        bodies = {int(b) for b in self.mesh.bodies}
        missing = bodies - self.rigid - set(self.materials)
        if missing:
            raise ValueError(f"bodies {sorted(missing)} have neither material nor rigid flag")
        if self.damping < 0.0:
            raise ValueError("damping must be non-negative")
        if self.damped_bodies is None:
            self.damped_bodies = frozenset(bodies - self.rigid)
        if self.incident_bodies is None:
            self.incident_bodies = frozenset(bodies)
        for bc in self.dirichlet:
            if len(bc.nodes) == 0:
                raise ValueError(f"boundary condition {bc.name!r} selects no nodes")
        for ld in self.loads:
            if len(ld.nodes) == 0:
                raise ValueError(f"load {ld.name!r} selects no nodes")


@dataclass
class SolverParams:
    dt: float = 0.003
    dt_min: float = 1e-6
    dt_max: float = None
    t_end: float = 1.0
    tol_abs: float = 1e-8
    tol_rel: float = 1e-10
    max_iter: int = 25
    divergence_window: int = 3
    grow_after: int = 5
    grow_factor: float = 1.2
    cut_factor: float = 0.5
    target_retries: int = 5
    max_backtracks: int = 10
    target_hysteresis: float = 1e-3
    phi_per_iteration: bool = False

    def __post_init__(self):
        if self.dt_max is None:
            self.dt_max = self.dt
        if not 0.0 < self.dt_min <= self.dt <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt <= dt_max")
        if self.max_iter < 1 or self.target_retries < 0:
            raise ValueError("max_iter must be positive and target_retries non-negative")


@dataclass
class SolverState:
    """Everything needed to resume a run bit-identically."""

    lam: float
    dt: float
    u: np.ndarray
    step: int = 0
    streak: int = 0
    assignments: tuple = ()
    v_max: list = field(default_factory=list)

    def save(self, path):
        keys = np.array(self.assignments, dtype=np.int64).reshape(-1, 2)
        with open(path, "wb") as fh:
            np.savez(fh, lam=self.lam, dt=self.dt, u=self.u, step=self.step, streak=self.streak,
                     assignments=keys, v_max=np.array(self.v_max, dtype=float))

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            keys = tuple((int(a), int(b)) for a, b in z["assignments"])
            return cls(float(z["lam"]), float(z["dt"]), z["u"].copy(), int(z["step"]),
                       int(z["streak"]), keys, [float(v) for v in z["v_max"]])

    def copy(self):
        return replace(self, u=self.u.copy(), v_max=list(self.v_max))


@dataclass
class NewtonResult:
    u: np.ndarray
    converged: bool
    iterations: int
    residuals: list
    g: np.ndarray
    equilibrium_error: float


@dataclass
class StepResult:
    step: int
    lam: float
    dt: float
    converged: bool
    iterations: int
    residuals: list
    v_max: float
    reactions: dict
    n_contacts: int
    rebuilt: bool
    target_retries: int
    equilibrium_error: float
    target_cycle: bool = False


@dataclass
class RunResult:
    results: list
    state: SolverState
    completed: bool
    message: str = ""
    rebuilds: int = 0
    attempts: int = 0


def step_control(dt, streak, success, params):
    """Next ``(dt, streak)`` after a step attempt."""
    if not success:
        return dt * params.cut_factor, 0
    streak += 1
    if streak >= params.grow_after:
        return min(dt * params.grow_factor, params.dt_max), 0
    return dt, streak


class Solver:
    def __init__(self, problem, params=None, backend=None):
        self.problem = problem
        self.params = params if params is not None else SolverParams()
        self.backend = backend
        mesh = problem.mesh
        self.mesh = mesh
        self.d = mesh.dim
        self.n_dofs = mesh.n_nodes * self.d
        deformable = np.nonzero(~np.isin(mesh.body, list(problem.rigid)))[0]
        self.model = ContinuumModel(mesh, problem.materials, deformable, backend)
        self.boundary = extract_boundary(mesh)
        self.incident = np.concatenate(
            [self.boundary.exterior_nodes[b] for b in sorted(problem.incident_bodies)
             if b in self.boundary.exterior_nodes] or [np.zeros(0, dtype=np.int64)])
        self.incident = np.unique(self.incident)
        self.weights = contact.tributary_weights(mesh, self.boundary)

        d = self.d
        values = {}
        for b in sorted(problem.rigid):
            for dof in (mesh.body_nodes(b)[:, None] * d + np.arange(d)).ravel():
                values[int(dof)] = 0.0
        for bc in problem.dirichlet:
            for dof in np.asarray(bc.nodes, dtype=np.int64) * d + bc.component:
                values[int(dof)] = float(bc.value)
        self.fixed = np.array(sorted(values), dtype=np.int64)
        self.fixed_values = np.array([values[k] for k in self.fixed.tolist()])
        free = np.ones(self.n_dofs, dtype=bool)
        free[self.fixed] = False
        self.free_mask = free
        self.f_ext_unit = np.zeros(self.n_dofs)
        for ld in problem.loads:
            f = np.broadcast_to(np.asarray(ld.forces, dtype=float), (len(ld.nodes), d))
            np.add.at(self.f_ext_unit, (np.asarray(ld.nodes)[:, None] * d + np.arange(d)).ravel(), f.ravel())
        damped_nodes = np.isin(mesh.node_body, list(problem.damped_bodies))
        self.damp_mask = np.repeat(damped_nodes, d) & free
        self.system = SparseSystem(self.n_dofs)
        self._pattern_keys = None
        self.rebuilds = 0
        self.last_contact = None
        self.attempts = 0
        self.reaction_sets = {bc.name: np.asarray(bc.nodes, dtype=np.int64) for bc in problem.dirichlet}
        for b in sorted(problem.rigid):
            self.reaction_sets.setdefault(f"body{b}", mesh.body_nodes(b))

    # -- helpers ---------------------------------------------------------
    def initial_state(self):
        return SolverState(0.0, self.params.dt, np.zeros((self.mesh.n_nodes, self.d)))

    def solve_phi(self, u):
        cp = self.problem.contact
        return adf.solve_field(self.mesh, self.mesh.nodes + u, c_L=cp.c_L, sign=cp.sign,
                               normalization=cp.gap_normalization, boundary=self.boundary.exterior_nodes,
                               backend=self.backend)

    def detect(self, u, phi_field, previous=None):
        x = self.mesh.nodes + u
        grid = detection.build_grid(self.mesh, x, self.incident)
        prev = None
        if previous is not None:
            prev = detection.DetectionReport([contact.TargetAssignment(n, e, ()) for n, e in previous])
        return detection.detect(self.mesh, x, grid, prev, phi_field.phi, phi_field.sgamma, self.backend)

    def _sticky(self, found, current, u):
        """Keep a node on its current target across a face shared with the new one.

        The piecewise-linear potential has a kink across interior faces, so a
        node in equilibrium on such a face can flip between the two elements on
        every re-detection. A node keeps its current target while it lies within
        ``target_hysteresis`` (in shape-function value) of it and the new target
        belongs to the same body.
        """
        tol = self.params.target_hysteresis
        if tol <= 0.0 or not current:
            return found
        old = {a.node: a for a in current}
        x = self.mesh.nodes + u
        body = self.mesh.body
        out = []
        for a in found:
            prev = old.get(a.node)
            if prev is not None and prev.element != a.element and body[prev.element] == body[a.element]:
                xe = x[self.mesh.elements[prev.element]]
                xi = contact.project_to_simplex(xe, x[a.node])
                N = np.concatenate([[1.0 - xi.sum()], xi])
                if N.min() >= -tol:
                    out.append(contact.TargetAssignment(a.node, prev.element, tuple(xi.tolist()), a.g))
                    continue
            out.append(a)
        return out

    def _ensure_pattern(self, assignments):
        keys = tuple(a.key for a in assignments)
        if keys == self._pattern_keys:
            return False
        blocks = [self.model.dofs]
        if assignments:
            blocks.append(self._contact_dofs(assignments))
        self.system.rebuild(blocks)
        self._pattern_keys = keys
        self.rebuilds += 1
        return True

    def _contact_dofs(self, assignments):
        d = self.d
        conn = self.mesh.elements[[a.element for a in assignments]]
        nodes = np.array([a.node for a in assignments], dtype=np.int64)
        allnodes = np.column_stack([conn, nodes])
        return (allnodes[:, :, None] * d + np.arange(d)).reshape(len(assignments), -1)

    def _kappa(self, assignments, x, phi_field):
        """Per-pair penalty, frozen for the Newton loop that uses ``assignments``."""
        cp = self.problem.contact
        if not assignments:
            return np.zeros(0)
        if cp.weighting == "none":
            return np.full(len(assignments), cp.kappa)
        nodes = np.array([a.node for a in assignments], dtype=np.int64)
        normals = contact.target_normals(self.mesh, x, [a.element for a in assignments], phi_field.phi)
        w = contact.projected_weights(self.mesh, self.boundary, x, nodes, normals)
        return np.array([contact.weighted_penalty(i, cp, w) for i in range(len(nodes))])

    def _contact_terms(self, u, assignments, phi_field, kappa):
        x = self.mesh.nodes + u
        g, r, K, dofs = contact.evaluate_assignments(assignments, self.mesh, x, phi_field.phi,
                                                     kappa, phi_field.sgamma, self.backend)
        bad = ~np.isfinite(g)
        if bad.any():
            # node left its target far enough that the potential extrapolates below zero
            g = np.where(bad, np.inf, g)
            r[bad] = 0.0
            K[bad] = 0.0
        return g, r, K, dofs

    def _assemble(self, u, u_prev, dt, lam, assignments, phi_field, kappa):
        sys = self.system
        sys.zero()
        _, fe, Ke = self.model.evaluate(u)
        sys.add(self.model.dofs, Ke, rhs=fe, name="solid")
        g = np.zeros(0)
        eq = 0.0
        if assignments:
            g, r, K, dofs = self._contact_terms(u, assignments, phi_field, kappa)
            sys.add(dofs, K, rhs=r, name="contact")
            sums = np.abs(r.reshape(len(r), self.d + 2, self.d).sum(axis=1)).max(axis=1)
            scale = np.abs(r).max(axis=1)
            act = scale > 0.0
            if act.any():
                eq = float((sums[act] / scale[act]).max())
        forces = sys.rhs.copy()
        R = forces - lam * self.f_ext_unit
        c = self.problem.damping
        if c > 0.0:
            cd = c / dt
            du = (u - u_prev).ravel()
            R[self.damp_mask] += cd * du[self.damp_mask]
            sys.add_diagonal(np.nonzero(self.damp_mask)[0], cd)
        return R, forces, g, eq

    # -- Newton ----------------------------------------------------------
    def newton_solve(self, u_start, u_prev, dt, lam, assignments, phi_field, kappa=None):
        """Newton iterations with frozen pairs and potentials.

        ``u_start`` holds the previous prescribed values; the first correction
        moves the fixed dofs to ``lam * value``.
        """
        p = self.params
        u = u_start.copy()
        self._ensure_pattern(assignments)
        if kappa is None and assignments:
            kappa = self._kappa(assignments, self.mesh.nodes + u, phi_field)
        target = lam * self.fixed_values
        residuals = []
        ref = 0.0
        r0 = None
        growth = 0
        eq_max = 0.0
        g = np.zeros(0)
        for it in range(p.max_iter + 1):
            if p.phi_per_iteration and it > 0:
                phi_field = self.solve_phi(u)
            R, forces, g, eq = self._assemble(u, u_prev, dt, lam, assignments, phi_field, kappa)
            eq_max = max(eq_max, eq)
            du_fixed = target - u.ravel()[self.fixed]
            norm = float(np.linalg.norm(R[self.free_mask]))
            ref = max(ref, float(np.linalg.norm(forces)), float(np.linalg.norm(lam * self.f_ext_unit)))
            prescribed_done = not np.any(du_fixed)
            residuals.append(norm)
            if prescribed_done:
                if r0 is None:
                    r0 = norm
                if norm <= p.tol_abs * ref or norm <= p.tol_rel * r0 or norm == 0.0:
                    return NewtonResult(u, True, it, residuals, g, eq_max)
                if len(residuals) >= 2 and residuals[-1] > residuals[-2]:
                    growth += 1
                    if growth >= p.divergence_window:
                        raise NewtonDivergence(f"residual grew for {growth} consecutive iterations")
                else:
                    growth = 0
            if it == p.max_iter:
                break
            A_ff, b_f, free = eliminate_dirichlet(self.system.tocsr(), -R, self.fixed, du_fixed)
            step = np.zeros(self.n_dofs)
            step[self.fixed] = du_fixed
            step[free] = solve_linear(A_ff, b_f)
            step = step.reshape(u.shape)
            alpha = 1.0
            for _ in range(p.max_backtracks):
                trial = u + alpha * step
                if alpha < 1.0:
                    trial.ravel()[self.fixed] = u.ravel()[self.fixed] + alpha * du_fixed
                try:
                    self.model.evaluate(trial)
                    break
                except InvertedElementError:
                    alpha *= 0.5
            else:
                raise StepFailure("element inversion could not be avoided by backtracking")
            u = trial
            if alpha == 1.0:
                u.ravel()[self.fixed] = target
        raise NewtonDivergence(f"no convergence in {p.max_iter} iterations (residual {residuals[-1]:.3e})")

    # -- steps -----------------------------------------------------------
    def _reactions(self, u, u_prev, dt, lam, assignments, phi_field, kappa):
        _, forces, _, _ = self._assemble(u, u_prev, dt, lam, assignments, phi_field, kappa)
        f = forces.reshape(-1, self.d)
        return {name: f[nodes].sum(axis=0) for name, nodes in self.reaction_sets.items()}

    def attempt_step(self, state, dt):
        """Try one step of size ``dt`` from ``state``; raises :class:`StepFailure`."""
        p = self.params
        lam = min(state.lam + dt, p.t_end)
        if p.t_end - lam < 1e-12 * p.t_end:
            lam = p.t_end
        u_prev = state.u
        trial = state.u.copy()
        trial.ravel()[self.fixed] = lam * self.fixed_values
        try:
            self.model.evaluate(trial)
            phi_field = self.solve_phi(trial) if self.problem.contact is not None else None
        except (InvertedElementError, DegenerateElementError) as exc:
            raise StepFailure(f"trial configuration invalid: {exc}") from exc

        assignments = []
        kappa = np.zeros(0)
        previous = state.assignments
        if phi_field is not None:
            report = self.detect(trial, phi_field, previous)
            assignments = report.assignments
            kappa = self._kappa(assignments, self.mesh.nodes + trial, phi_field)
        rebuilt = self._ensure_pattern(assignments)
        u = state.u
        iterations = 0
        residuals = []
        retries = 0
        eq_max = 0.0
        tried = {tuple(a.key for a in assignments)}
        cycled = False
        while True:
            try:
                res = self.newton_solve(u, u_prev, dt, lam, assignments, phi_field, kappa)
            except (LinearSolveError, InvertedElementError) as exc:
                raise StepFailure(str(exc)) from exc
            iterations += res.iterations
            residuals.extend(res.residuals)
            eq_max = max(eq_max, res.equilibrium_error)
            u = res.u
            if phi_field is None:
                break
            report = self.detect(u, phi_field, [a.key for a in assignments])
            revised = self._sticky(report.assignments, assignments, u)
            revised_keys = tuple(a.key for a in revised)
            if revised_keys == tuple(a.key for a in assignments):
                break
            if revised_keys in tried:
                # pairs cycle between sets already solved; keep the converged one
                cycled = True
                break
            tried.add(revised_keys)
            retries += 1
            if retries > p.target_retries:
                raise StepFailure(f"targets still changing after {p.target_retries} retries")
            assignments = revised
            kappa = self._kappa(assignments, self.mesh.nodes + u, phi_field)
            rebuilt = self._ensure_pattern(assignments) or rebuilt

        g = res.g
        v_max = float(max(0.0, -np.min(g))) if g.size else 0.0
        reactions = self._reactions(u, u_prev, dt, lam, assignments, phi_field, kappa)
        new_state = SolverState(lam, dt, u, state.step + 1, state.streak,
                                tuple(a.key for a in assignments), state.v_max + [v_max])
        result = StepResult(state.step + 1, lam, dt, True, iterations, residuals, v_max, reactions,
                            len(assignments), rebuilt, retries, eq_max, cycled)
        self.last_contact = (u, assignments, phi_field, kappa)
        return new_state, result

    def incident_forces(self):
        """Contact force on each incident node of the last accepted step.

        Returns ``(nodes, forces, g)`` sorted by node.
        """
        d = self.d
        if self.last_contact is None or not self.last_contact[1]:
            return np.zeros(0, dtype=np.int64), np.zeros((0, d)), np.zeros(0)
        u, assignments, phi_field, kappa = self.last_contact
        g, r, _, _ = self._contact_terms(u, assignments, phi_field, kappa)
        nodes = np.array([a.node for a in assignments], dtype=np.int64)
        return nodes, -r[:, -d:], g

    def interface_tractions(self):
        """Contact force magnitude per projected tributary measure, per incident node.

        Returns ``(nodes, tractions)`` for the active pairs of the last accepted step.
        """
        nodes, f, _ = self.incident_forces()
        if nodes.size == 0:
            return nodes, np.zeros(0)
        u, assignments, phi_field, _ = self.last_contact
        x = self.mesh.nodes + u
        normals = contact.target_normals(self.mesh, x, [a.element for a in assignments], phi_field.phi)
        w = contact.projected_weights(self.mesh, self.boundary, x, nodes, normals)
        return nodes, np.linalg.norm(f, axis=1) / w

    def step(self, state):
        """Advance one accepted step, cutting ``dt`` on failure."""
        p = self.params
        dt = min(state.dt, p.dt_max)
        streak = state.streak
        attempts = 0
        while True:
            attempts += 1
            try:
                new_state, result = self.attempt_step(state, dt)
            except StepFailure as exc:
                log.info("step %d failed at dt=%.3e: %s", state.step + 1, dt, exc)
                dt, streak = step_control(dt, streak, False, p)
                if dt < p.dt_min * (1.0 - 1e-12):
                    raise SolverAbort(f"step {state.step + 1} failed at the minimum step size: {exc}",
                                      state) from exc
                continue
            new_dt, new_streak = step_control(dt, streak, True, p)
            new_state.dt = new_dt
            new_state.streak = new_streak
            self.attempts = attempts
            return new_state, result

    def run(self, state=None, max_steps=None, callback=None):
        """Step until ``t_end`` (or ``max_steps`` accepted steps)."""
        state = self.initial_state() if state is None else state.copy()
        results = []
        attempts = 0
        try:
            while state.lam < self.params.t_end:
                if max_steps is not None and len(results) >= max_steps:
                    break
                state, result = self.step(state)
                attempts += self.attempts
                results.append(result)
                if callback is not None:
                    callback(state, result)
        except SolverAbort as exc:
            return RunResult(results, exc.state, False, str(exc), self.rebuilds, attempts)
        done = state.lam >= self.params.t_end
        return RunResult(results, state, done, "" if done else "stopped early", self.rebuilds, attempts)


def write_log(results, path_or_buffer, reaction_names=None):
    """Per-step CSV with lambda, dt, iterations, v_max, contacts and reactions."""
    if reaction_names is None:
        reaction_names = sorted(results[0].reactions) if results else []
    d = len(next(iter(results[0].reactions.values()))) if results and results[0].reactions else 0
    header = ["step", "lambda", "dt", "iterations", "v_max", "contacts", "rebuilt", "target_retries"]
    for name in reaction_names:
        header += [f"{name}_R{'xyz'[k]}" for k in range(d)]
    own = isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__")
    fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for r in results:
            row = [r.step, repr(r.lam), repr(r.dt), r.iterations, repr(r.v_max), r.n_contacts,
                   int(r.rebuilt), r.target_retries]
            for name in reaction_names:
                row += [repr(float(v)) for v in r.reactions[name]]
            w.writerow(row)
    finally:
        if own:
            fh.close()
