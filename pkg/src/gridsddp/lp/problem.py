"""Linear program container: variables, linear rows, dense array form.

Problems are built incrementally (add_var / add_con), then finalized into
dense numpy arrays. After finalize() the structure is frozen but objective
coefficients and right-hand sides stay mutable so one problem can serve as
a template for many solves that differ only in data.
"""

import math

import numpy as np

LE, EQ, GE = -1, 0, 1

_SENSE_CODE = {"<=": LE, "=": EQ, ">=": GE, "<": LE, ">": GE, "==": EQ}
_SENSE_TEXT = {LE: "<=", EQ: "=", GE: ">="}

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpProblem:
    """A minimization LP over bounded variables and <=, =, >= rows."""

    def __init__(self, name="lp"):
        self.name = name
        self._var_names = []
        self._var_index = {}
        self._lb = []
        self._ub = []
        self._obj = []
        self._con_names = []
        self._con_index = {}
        self._rows = []  # list of (indices, coefs)
        self._sense = []
        self._rhs = []
        self._finalized = False

    # -- construction ------------------------------------------------------

    def add_var(self, name, lb=0.0, ub=math.inf, obj=0.0):
        if self._finalized:
            raise ValueError("problem already finalized")
        if name in self._var_index:
            raise ValueError(f"duplicate variable {name!r}")
        if lb > ub:
            raise ValueError(f"variable {name!r}: lower bound {lb} > upper bound {ub}")
        j = len(self._var_names)
        self._var_index[name] = j
        self._var_names.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._obj.append(float(obj))
        return j

    def add_con(self, name, coeffs, sense, rhs):
        """coeffs: iterable of (variable index or name, coefficient)."""
        if self._finalized:
            raise ValueError("problem already finalized")
        if name in self._con_index:
            raise ValueError(f"duplicate constraint {name!r}")
        idx, val = [], []
        for var, coef in coeffs:
            j = self._var_index[var] if isinstance(var, str) else int(var)
            if not 0 <= j < len(self._var_names):
                raise ValueError(f"constraint {name!r} references unknown variable {var!r}")
            idx.append(j)
            val.append(float(coef))
        i = len(self._con_names)
        self._con_index[name] = i
        self._con_names.append(name)
        self._rows.append((idx, val))
        self._sense.append(_SENSE_CODE[sense])
        self._rhs.append(float(rhs))
        return i

    def finalize(self):
        if self._finalized:
            return self
        n, m = len(self._var_names), len(self._con_names)
        self.obj = np.asarray(self._obj, dtype=np.float64)
        self.lb = np.asarray(self._lb, dtype=np.float64)
        self.ub = np.asarray(self._ub, dtype=np.float64)
        self.rhs = np.asarray(self._rhs, dtype=np.float64)
        self.sense = np.asarray(self._sense, dtype=np.int8)
        self.A = np.zeros((m, n), dtype=np.float64)
        for i, (idx, val) in enumerate(self._rows):
            for j, v in zip(idx, val):
                self.A[i, j] += v
        self._finalized = True
        return self

    # -- post-finalize access ---------------------------------------------

    @property
    def num_vars(self):
        return len(self._var_names)

    @property
    def num_cons(self):
        return len(self._con_names)

    @property
    def var_names(self):
        return list(self._var_names)

    @property
    def con_names(self):
        return list(self._con_names)

    def var_index(self, name):
        return self._var_index[name]

    def con_index(self, name):
        return self._con_index[name]

    def set_rhs(self, row, value):
        if isinstance(row, str):
            row = self._con_index[row]
        self.rhs[row] = value

    def set_obj(self, col, value):
        if isinstance(col, str):
            col = self._var_index[col]
        self.obj[col] = value

    def copy(self):
        """Deep copy; finalized problems stay finalized."""
        p = LpProblem(self.name)
        p._var_names = list(self._var_names)
        p._var_index = dict(self._var_index)
        p._con_names = list(self._con_names)
        p._con_index = dict(self._con_index)
        p._rows = [(list(i), list(v)) for i, v in self._rows]
        if self._finalized:
            p._lb, p._ub, p._obj = [], [], []
            p._sense, p._rhs = [], []
            p.obj = self.obj.copy()
            p.lb = self.lb.copy()
            p.ub = self.ub.copy()
            p.rhs = self.rhs.copy()
            p.sense = self.sense.copy()
            p.A = self.A.copy()
            p._finalized = True
        else:
            p._lb = list(self._lb)
            p._ub = list(self._ub)
            p._obj = list(self._obj)
            p._sense = list(self._sense)
            p._rhs = list(self._rhs)
        return p

    # -- LP-format dump ----------------------------------------------------

    def write_lp(self, path):
        """Dump in CPLEX LP text format, declaration order preserved."""
        self.finalize()
        lines = [f"\\ Problem: {self.name}", "Minimize"]
        lines.append(" obj: " + _expr(self.obj, self._var_names))
        lines.append("Subject To")
        for i, cname in enumerate(self._con_names):
            expr = _expr(self.A[i], self._var_names)
            lines.append(f" {cname}: {expr} {_SENSE_TEXT[int(self.sense[i])]} {_num(self.rhs[i])}")
        lines.append("Bounds")
        for j, vname in enumerate(self._var_names):
            lo, hi = self.lb[j], self.ub[j]
            if lo == -math.inf and hi == math.inf:
                lines.append(f" {vname} free")
            elif hi == math.inf:
                lines.append(f" {_num(lo)} <= {vname}")
            elif lo == -math.inf:
                lines.append(f" -inf <= {vname} <= {_num(hi)}")
            else:
                lines.append(f" {_num(lo)} <= {vname} <= {_num(hi)}")
        lines.append("End")
        text = "\n".join(lines) + "\n"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        return text


def _num(x):
    return format(float(x), ".12g")


def _expr(coefs, names):
    terms = []
    for c, name in zip(coefs, names):
        if c == 0.0:
            continue
        sign = "-" if c < 0 else "+"
        terms.append(f"{sign} {_num(abs(c))} {name}")
    if not terms:
        return "0"
    head = terms[0]
    head = head[2:] if head.startswith("+ ") else "-" + head[2:]
    return " ".join([head] + terms[1:])


class LpSolution:
    """Primal/dual certificate of one solve.

    Duals follow the right-hand-side perturbation convention for a
    minimization problem: bumping rhs_i by eps moves the optimal objective
    by duals[i] * eps to first order.
    """

    __slots__ = (
        "status",
        "objective",
        "x",
        "duals",
        "reduced_costs",
        "row_activity",
        "dual_objective",
        "iterations",
        "basis",
        "vstat",
        "_problem",
    )

    def __init__(self, status, objective, x, duals, reduced_costs, row_activity,
                 dual_objective, iterations, problem, basis=None, vstat=None):
        self.status = status
        self.objective = objective
        self.x = x
        self.duals = duals
        self.reduced_costs = reduced_costs
        self.row_activity = row_activity
        self.dual_objective = dual_objective
        self.iterations = iterations
        self.basis = basis
        self.vstat = vstat
        self._problem = problem

    def value(self, name):
        return float(self.x[self._problem.var_index(name)])

    def dual(self, name):
        return float(self.duals[self._problem.con_index(name)])

    def reduced_cost(self, name):
        return float(self.reduced_costs[self._problem.var_index(name)])

    def __repr__(self):
        return f"LpSolution(status={self.status!r}, objective={self.objective!r}, iterations={self.iterations})"
