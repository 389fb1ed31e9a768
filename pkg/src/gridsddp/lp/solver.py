"""Solve entry point with kernel selection and dual validation helpers.

Two interchangeable simplex kernels exist: a compiled extension
(gridsddp.lp._speedups, built from _speedups.pyx) and the pure-numpy
fallback in simplex_py. The compiled one is picked at import when present;
GRIDSDDP_KERNEL=python|cython forces a choice, and set_kernel() switches at
runtime (used by the kernel benchmark and the test matrix).
"""

import math
import os
import threading

import numpy as np

from ..errors import NumericalFailure
from . import simplex_py
from .problem import GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, LpSolution

_KERNELS = {"python": simplex_py}
try:
    from . import _speedups  # compiled extension, optional

    _KERNELS["cython"] = _speedups
except ImportError:
    _speedups = None

_DEFAULT = "cython" if "cython" in _KERNELS else "python"
_forced = os.environ.get("GRIDSDDP_KERNEL", "").strip().lower()
if _forced:
    if _forced not in _KERNELS:
        raise ImportError(f"GRIDSDDP_KERNEL={_forced!r} requested but that kernel is unavailable")
    _DEFAULT = _forced

_active = _DEFAULT
_solve_count = 0
_count_lock = threading.Lock()

FEAS_TOL = 1e-7
OPT_TOL = 1e-6

_STATUS_TEXT = {
    simplex_py.ST_OPTIMAL: OPTIMAL,
    simplex_py.ST_INFEASIBLE: INFEASIBLE,
    simplex_py.ST_UNBOUNDED: UNBOUNDED,
}


def available_kernels():
    return sorted(_KERNELS)


def active_kernel():
    return _active


def set_kernel(name):
    global _active
    if name not in _KERNELS:
        raise ValueError(f"unknown kernel {name!r}; available: {available_kernels()}")
    _active = name


def solve_count():
    """Number of kernel solves since the last reset (all kernels)."""
    return _solve_count


def reset_solve_count():
    global _solve_count
    _solve_count = 0


def solve(problem, feas_tol=FEAS_TOL, opt_tol=OPT_TOL, max_iter=0, warm=None):
    """Solve a finalized (or finalizable) LpProblem to a primal/dual pair.

    Infeasible and unbounded outcomes are reported through the status field;
    NumericalFailure is raised when the kernel loses precision. `warm` may be
    a previous LpSolution for the same problem structure (its basis seeds the
    solve, typically finishing in a few pivots after small data pokes).
    """
    global _solve_count
    problem.finalize()
    with _count_lock:
        _solve_count += 1
    n, m = problem.num_vars, problem.num_cons

    if np.any(problem.lb > problem.ub):
        raise ValueError("variable with lower bound above upper bound")

    if m == 0:
        return _solve_boxed(problem)

    sl = np.zeros(m)
    su = np.zeros(m)
    le = problem.sense == LE
    ge = problem.sense == GE
    su[le] = math.inf
    sl[ge] = -math.inf
    xl = np.concatenate([problem.lb, sl])
    xu = np.concatenate([problem.ub, su])

    warm_basis = warm_vstat = None
    if warm is not None and warm.basis is not None and warm.vstat is not None \
            and warm.vstat.shape[0] == n + m:
        warm_basis, warm_vstat = warm.basis, warm.vstat

    kernel = _KERNELS[_active]
    status, x, y, rc, vstat, iters, basis = kernel.solve_kernel(
        problem.A, problem.rhs, problem.obj, xl, xu, feas_tol, opt_tol, max_iter,
        warm_basis, warm_vstat
    )

    if status == simplex_py.ST_NUMERICAL:
        raise NumericalFailure(
            f"simplex lost precision on {problem.name!r} after {iters} iterations"
        )

    text = _STATUS_TEXT[status]
    x_struct = x[:n].copy()
    activity = problem.A @ x_struct
    if text != OPTIMAL:
        return LpSolution(text, None, x_struct, y, rc[:n].copy(), activity,
                          math.nan, iters, problem, basis, vstat)

    objective = float(problem.obj @ x_struct)
    nonbasic = vstat != simplex_py.BASIC
    dual_objective = float(y @ problem.rhs + rc[nonbasic] @ x[nonbasic])
    return LpSolution(OPTIMAL, objective, x_struct, y, rc[:n].copy(), activity,
                      dual_objective, iters, problem, basis, vstat)


def _solve_boxed(problem):
    """No rows: optimum sits on variable bounds."""
    c, lo, hi = problem.obj, problem.lb, problem.ub
    x = np.where(c > 0, lo, np.where(c < 0, hi, np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))))
    if np.any(~np.isfinite(x)):
        return LpSolution(UNBOUNDED, None, np.zeros(problem.num_vars), np.zeros(0),
                          c.copy(), np.zeros(0), math.nan, 0, problem)
    obj = float(c @ x)
    return LpSolution(OPTIMAL, obj, x.astype(float), np.zeros(0), c.copy(),
                      np.zeros(0), obj, 0, problem)


def dual_check(problem, sol, eps=1e-2, feas_tol=FEAS_TOL, opt_tol=OPT_TOL):
    """Max relative gap between each dual and its finite-difference estimate.

    Re-solves once per row with the rhs bumped by eps. Degenerate problems
    can legitimately exceed tolerance here; callers flag rather than fail.
    """
    if sol.status != OPTIMAL:
        raise ValueError("dual_check requires an optimal solution")
    problem.finalize()
    worst = 0.0
    for i in range(problem.num_cons):
        bumped = problem.copy()
        bumped.set_rhs(i, problem.rhs[i] + eps)
        resolved = solve(bumped, feas_tol=feas_tol, opt_tol=opt_tol)
        if resolved.status != OPTIMAL:
            continue
        predicted = sol.duals[i] * eps
        gap = abs((resolved.objective - sol.objective) - predicted) / (abs(predicted) + 1.0)
        worst = max(worst, gap)
    return worst
