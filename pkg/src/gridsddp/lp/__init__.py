"""Self-contained LP layer: problem builder plus dual-aware simplex."""

from .problem import EQ, GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, LpProblem, LpSolution
from .solver import (
    FEAS_TOL,
    OPT_TOL,
    active_kernel,
    available_kernels,
    dual_check,
    reset_solve_count,
    set_kernel,
    solve,
    solve_count,
)

__all__ = [
    "LpProblem",
    "LpSolution",
    "LE",
    "EQ",
    "GE",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "FEAS_TOL",
    "OPT_TOL",
    "solve",
    "dual_check",
    "solve_count",
    "reset_solve_count",
    "set_kernel",
    "active_kernel",
    "available_kernels",
]
