"""Penalized HUM on P1 elements with backward Euler time stepping."""
from ._backend import BACKENDS, DEFAULT as DEFAULT_BACKEND, Stepper, Tridiag
from .config import alpha_from_spec, field_from_spec, strided_inverse_square
from .fem import Mesh1D, Operators, TimeScheme, assemble
from .solver import (ConvergenceError, HumConfig, HumProblem, HumRun, SweepResult, apply_gramian,
                     conjugate_gradient, conjugate_residual, forward_solve, loglog_slope,
                     solve_penalized, sweep)

__all__ = [
    "BACKENDS", "DEFAULT_BACKEND", "Stepper", "Tridiag", "alpha_from_spec", "field_from_spec",
    "strided_inverse_square", "Mesh1D", "Operators", "TimeScheme", "assemble", "ConvergenceError",
    "HumConfig", "HumProblem", "HumRun", "SweepResult", "apply_gramian", "conjugate_gradient",
    "conjugate_residual", "forward_solve", "loglog_slope", "solve_penalized", "sweep",
]
