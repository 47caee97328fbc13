"""Finite-strain contact with gaps from screened Poisson distance functions."""

from . import adf, contact, detection, fem, generators, kernels, material, mesh, scenario, solver
from .adf import GapEval, ScalarField, eval_gap, solve_field, varadhan_limit_check
from .contact import ContactParams, TargetAssignment, contact_element, project_to_simplex, projection_derivatives
from .detection import BucketGrid, DetectionReport, brute_force_detect, build_grid, detect
from .material import MaterialParams
from .mesh import Mesh, extract_boundary, load_mesh, save_mesh, write_snapshot
from .scenario import build_problem, parse_scenario
from .solver import DirichletBC, NodalLoad, Problem, Solver, SolverParams, SolverState

__version__ = "0.1.0"
