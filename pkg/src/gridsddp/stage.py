"""One-period dispatch LP: construction, template reuse, decision extraction.

A stage problem couples per-bus power balance with slack penalties, DC flow,
ramp-tightened generation rows, storage evolution with charge and discharge
efficiencies, a convex-combination (sampled breakpoint) representation of
generator costs, and a single future-cost variable supported by cuts.

Templates are built once per (network, cut pool, breakpoint grid) and then
re-instantiated for each (state, wind) pair by poking right-hand sides, so
the many solves inside SDDP and DP skip symbolic construction entirely.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SimultaneousChargeDischarge
from .lp import LpProblem, solve

DEFAULT_BREAKPOINTS = 11
SIMUL_TOL = 1e-5


@dataclass(frozen=True)
class SystemState:
    """SDP state entering period t: storage levels, previous generation,
    previous wind output."""

    t: int
    s: np.ndarray
    p_prev: np.ndarray
    w_prev: np.ndarray

    def validate_for(self, net, wind_capacity=None):
        out = []
        if len(self.s) != len(net.storage_devices):
            out.append("storage vector length mismatch")
        if len(self.p_prev) != len(net.generators):
            out.append("generation vector length mismatch")
        if len(self.w_prev) != len(net.wind_farms):
            out.append("wind vector length mismatch")
        if out:
            return out
        for d, v in zip(net.storage_devices, self.s):
            if not d.s_min - 1e-9 <= v <= d.s_max + 1e-9:
                out.append(f"storage {d.id} level {v} outside [{d.s_min}, {d.s_max}]")
        for g, v in zip(net.generators, self.p_prev):
            if not g.p_min - 1e-9 <= v <= g.p_max + 1e-9:
                out.append(f"generator {g.id} previous output {v} outside [{g.p_min}, {g.p_max}]")
        if wind_capacity is not None:
            for farm, v, cap in zip(net.wind_farms, self.w_prev, wind_capacity):
                if not -1e-9 <= v <= cap + 1e-9:
                    out.append(f"wind farm {farm.id} previous output {v} outside [0, {cap}]")
        return out


def initial_state(net, model=None):
    """Assemble the period-1 state from case-file options and model mean."""
    if net.initial_wind:
        w0 = np.asarray(net.initial_wind, dtype=float)
    elif model is not None:
        w0 = model.mu.astype(float).copy()
    else:
        w0 = np.zeros(len(net.wind_farms))
    return SystemState(t=1, s=np.asarray(net.s0(), dtype=float),
                       p_prev=np.asarray(net.p0(), dtype=float), w_prev=w0)


def build_breakpoints(gen, count):
    """Sampled generation points spanning [p_min, p_max] with exact costs.

    Quadratic costs get a uniform grid of `count` points; explicit breakpoint
    costs are copied as given (count ignored).
    """
    if gen.cost[0] == "pts":
        pts = np.array([p for p, _ in gen.cost[1]])
        costs = np.array([c for _, c in gen.cost[1]])
        return pts, costs
    if count < 2:
        raise ValueError("breakpoint count must be >= 2")
    pts = np.linspace(gen.p_min, gen.p_max, count)
    costs = np.array([gen.cost_at(p) for p in pts])
    return pts, costs


@dataclass(frozen=True)
class BreakpointGrid:
    """Per-generator sampled (generation, cost) pairs, network order."""

    points: tuple   # tuple of arrays
    costs: tuple

    @classmethod
    def build(cls, net, count=DEFAULT_BREAKPOINTS):
        pts, costs = [], []
        for g in net.generators:
            p, c = build_breakpoints(g, count)
            pts.append(p)
            costs.append(c)
        return cls(points=tuple(pts), costs=tuple(costs))

    @classmethod
    def build_refined(cls, net, count):
        """Nested 2x refinement: 2*count - 1 uniform points contain the
        count-point grid, so stage objectives shrink monotonically."""
        return cls.build(net, 2 * count - 1)


@dataclass(frozen=True)
class StageDecision:
    generation: np.ndarray
    charge: np.ndarray
    discharge: np.ndarray
    grid_power: np.ndarray
    flows: np.ndarray
    angles: np.ndarray
    slack_pos: np.ndarray
    slack_neg: np.ndarray
    immediate_cost: float
    future_value: float
    objective: float
    next_state: SystemState


@dataclass
class StageOptions:
    breakpoints: int = DEFAULT_BREAKPOINTS
    simul_tol: float = SIMUL_TOL
    terminal_salvage: float = 0.0  # $/MWh credit on final storage level


class StageCore:
    """Shared stage rows (everything except the future-cost term)."""

    def __init__(self, net, grid, options=None, name="stage"):
        self.net = net
        self.options = options or StageOptions()
        self.grid = grid if grid is not None else BreakpointGrid.build(net, self.options.breakpoints)
        self.lp = LpProblem(name)
        self._build()

    def _build(self):
        net, lp, grid = self.net, self.lp, self.grid
        nb = len(net.buses)
        ng = len(net.generators)
        ns = len(net.storage_devices)

        self.p_col = np.empty(ng, dtype=int)
        self.beta_cols = []
        for gi, g in enumerate(net.generators):
            self.p_col[gi] = lp.add_var(f"p_{g.id}", -math.inf, math.inf, 0.0)
        for gi, g in enumerate(net.generators):
            cols = [lp.add_var(f"beta_{g.id}_{k}", 0.0, 1.0, float(grid.costs[gi][k]))
                    for k in range(len(grid.points[gi]))]
            self.beta_cols.append(np.array(cols, dtype=int))

        self.dpos_col = np.empty(ns, dtype=int)
        self.dneg_col = np.empty(ns, dtype=int)
        self.snext_col = np.empty(ns, dtype=int)
        self.gamma_col = np.empty(ns, dtype=int)
        for ji, d in enumerate(net.storage_devices):
            self.dpos_col[ji] = lp.add_var(f"dpos_{d.id}", 0.0, d.delta_max, d.variation_cost)
            self.dneg_col[ji] = lp.add_var(f"dneg_{d.id}", 0.0, d.delta_max, d.variation_cost)
            self.snext_col[ji] = lp.add_var(f"snext_{d.id}", d.s_min, d.s_max, 0.0)
            self.gamma_col[ji] = lp.add_var(f"gamma_{d.id}", -math.inf, math.inf, 0.0)

        self.flow_col = np.empty(len(net.lines), dtype=int)
        for li, l in enumerate(net.lines):
            self.flow_col[li] = lp.add_var(f"flow_{l.id}", -l.flow_limit, l.flow_limit, 0.0)
        self.theta_col = np.empty(nb, dtype=int)
        slack_id = net.slack_bus().id if nb else None
        for bi, b in enumerate(net.buses):
            if b.id == slack_id:
                self.theta_col[bi] = lp.add_var(f"theta_{b.id}", 0.0, 0.0, 0.0)
            else:
                self.theta_col[bi] = lp.add_var(f"theta_{b.id}", -math.inf, math.inf, 0.0)

        self.kpos_col = np.empty(nb, dtype=int)
        self.kneg_col = np.empty(nb, dtype=int)
        for bi, b in enumerate(net.buses):
            self.kpos_col[bi] = lp.add_var(f"kpos_{b.id}", 0.0, math.inf, net.penalty_m)
            self.kneg_col[bi] = lp.add_var(f"kneg_{b.id}", 0.0, math.inf, net.penalty_m)

        # power balance rows; wind realizations land on the rhs
        gen_at = {}
        for gi, g in enumerate(net.generators):
            gen_at.setdefault(g.bus, []).append(gi)
        self.storage_at = {d.bus: ji for ji, d in enumerate(net.storage_devices)}
        self.farm_at = {f.bus: mi for mi, f in enumerate(net.wind_farms)}
        self.balance_row = np.empty(nb, dtype=int)
        self.wind_balance_rows = np.empty(len(net.wind_farms), dtype=int)
        self.farm_bus_pos = np.empty(len(net.wind_farms), dtype=int)
        for bi, b in enumerate(net.buses):
            coeffs = [(int(self.p_col[gi]), 1.0) for gi in gen_at.get(b.id, [])]
            for li, l in enumerate(net.lines):
                if l.to_bus == b.id:
                    coeffs.append((int(self.flow_col[li]), 1.0))
                if l.from_bus == b.id:
                    coeffs.append((int(self.flow_col[li]), -1.0))
            if b.id in self.storage_at:
                coeffs.append((int(self.gamma_col[self.storage_at[b.id]]), -1.0))
            coeffs.append((int(self.kpos_col[bi]), -1.0))
            coeffs.append((int(self.kneg_col[bi]), 1.0))
            row = lp.add_con(f"balance_{b.id}", coeffs, "=", 0.0)
            self.balance_row[bi] = row
            if b.id in self.farm_at:
                self.wind_balance_rows[self.farm_at[b.id]] = row
                self.farm_bus_pos[self.farm_at[b.id]] = bi

        # ramp-tightened generation bounds as named rows (duals feed cuts)
        self.ramp_lo_row = np.empty(ng, dtype=int)
        self.ramp_up_row = np.empty(ng, dtype=int)
        for gi, g in enumerate(net.generators):
            self.ramp_lo_row[gi] = lp.add_con(f"ramp_lo_{g.id}",
                                              [(int(self.p_col[gi]), 1.0)], ">=", g.p_min)
            self.ramp_up_row[gi] = lp.add_con(f"ramp_up_{g.id}",
                                              [(int(self.p_col[gi]), 1.0)], "<=", g.p_max)

        # DC flow definition e = B (theta_to - theta_from)
        bus_pos = {b.id: bi for bi, b in enumerate(net.buses)}
        for li, l in enumerate(net.lines):
            lp.add_con(
                f"flowdef_{l.id}",
                [(int(self.flow_col[li]), 1.0),
                 (int(self.theta_col[bus_pos[l.to_bus]]), -l.susceptance),
                 (int(self.theta_col[bus_pos[l.from_bus]]), l.susceptance)],
                "=", 0.0)

        # storage evolution and grid-side coupling
        self.evol_row = np.empty(ns, dtype=int)
        for ji, d in enumerate(net.storage_devices):
            self.evol_row[ji] = lp.add_con(
                f"evol_{d.id}",
                [(int(self.snext_col[ji]), 1.0), (int(self.dpos_col[ji]), -1.0),
                 (int(self.dneg_col[ji]), 1.0)],
                "=", 0.0)
            lp.add_con(
                f"gammadef_{d.id}",
                [(int(self.gamma_col[ji]), 1.0), (int(self.dpos_col[ji]), -1.0 / d.eff_charge),
                 (int(self.dneg_col[ji]), d.eff_discharge)],
                "=", 0.0)

        # sampled-cost interpolation rows
        for gi, g in enumerate(net.generators):
            coeffs = [(int(self.p_col[gi]), 1.0)]
            coeffs += [(int(c), -float(pt)) for c, pt in zip(self.beta_cols[gi], self.grid.points[gi])]
            lp.add_con(f"glp_link_{g.id}", coeffs, "=", 0.0)
            lp.add_con(f"glp_conv_{g.id}", [(int(c), 1.0) for c in self.beta_cols[gi]], "=", 1.0)

        self._loads = np.array([b.load_profile for b in net.buses], dtype=float) \
            if net.horizon else np.zeros((nb, 0))
        self.ramp_side_lo = np.zeros(ng, dtype=bool)
        self.ramp_side_up = np.zeros(ng, dtype=bool)
        self.state = None
        self.wind = None

    def finalize(self):
        self.lp.finalize()
        return self

    def set_state(self, state):
        """Poke state-dependent right-hand sides (loads, ramps, evolution)."""
        net = self.net
        if len(state.s) != len(net.storage_devices) or \
                len(state.p_prev) != len(net.generators) or \
                len(state.w_prev) != len(net.wind_farms):
            raise DimensionMismatch("state dimensions disagree with network")
        if not 1 <= state.t <= net.horizon:
            raise DimensionMismatch(f"period {state.t} outside horizon 1..{net.horizon}")
        lp = self.lp
        loads = self._loads[:, state.t - 1]
        for bi in range(len(net.buses)):
            lp.rhs[self.balance_row[bi]] = loads[bi]
        for gi, g in enumerate(net.generators):
            ramp_lo = state.p_prev[gi] - g.ramp_down
            ramp_up = state.p_prev[gi] + g.ramp_up
            # ties count as ramp-side (the state moves the bound)
            self.ramp_side_lo[gi] = ramp_lo >= g.p_min
            self.ramp_side_up[gi] = ramp_up <= g.p_max
            lp.rhs[self.ramp_lo_row[gi]] = max(ramp_lo, g.p_min)
            lp.rhs[self.ramp_up_row[gi]] = min(ramp_up, g.p_max)
        for ji, d in enumerate(net.storage_devices):
            lp.rhs[self.evol_row[ji]] = d.eff_storage * state.s[ji]
        self.state = state

    def set_wind(self, wind):
        """Subtract the realization from wind-bus balance rows."""
        wind = np.asarray(wind, dtype=float)
        if wind.shape[0] != len(self.net.wind_farms):
            raise DimensionMismatch("wind vector length disagrees with network")
        loads = self._loads[:, self.state.t - 1]
        for mi, row in enumerate(self.wind_balance_rows):
            self.lp.rhs[row] = loads[self.farm_bus_pos[mi]] - wind[mi]
        self.wind = wind

    def instantiate(self, state, wind):
        self.set_state(state)
        self.set_wind(wind)
        return self.lp

    def apply_salvage(self, credit):
        for col in self.snext_col:
            self.lp.set_obj(int(col), -float(credit))

    # -- extraction --------------------------------------------------------

    def immediate_cost(self, sol):
        net = self.net
        h = 0.0
        for gi in range(len(net.generators)):
            h += float(self.grid.costs[gi] @ sol.x[self.beta_cols[gi]])
        for ji, d in enumerate(net.storage_devices):
            h += d.variation_cost * float(sol.x[self.dpos_col[ji]] + sol.x[self.dneg_col[ji]])
        h += net.penalty_m * float(np.sum(sol.x[self.kpos_col]) + np.sum(sol.x[self.kneg_col]))
        if self.options.terminal_salvage:
            h -= self.options.terminal_salvage * float(np.sum(sol.x[self.snext_col]))
        return h

    def extract_decision(self, sol, future_value=0.0):
        net, state = self.net, self.state
        dpos = sol.x[self.dpos_col].copy()
        dneg = sol.x[self.dneg_col].copy()
        both = np.minimum(dpos, dneg)
        if both.size and float(both.max()) > self.options.simul_tol:
            ji = int(both.argmax())
            raise SimultaneousChargeDischarge(
                f"device {net.storage_devices[ji].id} charges {dpos[ji]:.6f} and "
                f"discharges {dneg[ji]:.6f} MWh in period {state.t}")
        s_next = sol.x[self.snext_col].copy()
        for ji, d in enumerate(net.storage_devices):
            s_next[ji] = min(max(s_next[ji], d.s_min), d.s_max)
        p_now = sol.x[self.p_col].copy()
        for gi, g in enumerate(net.generators):
            p_now[gi] = min(max(p_now[gi], g.p_min), g.p_max)
        nxt = SystemState(t=state.t + 1, s=s_next, p_prev=p_now,
                          w_prev=np.asarray(self.wind, dtype=float).copy())
        return StageDecision(
            generation=p_now,
            charge=dpos,
            discharge=dneg,
            grid_power=sol.x[self.gamma_col].copy(),
            flows=sol.x[self.flow_col].copy(),
            angles=sol.x[self.theta_col].copy(),
            slack_pos=sol.x[self.kpos_col].copy(),
            slack_neg=sol.x[self.kneg_col].copy(),
            immediate_cost=self.immediate_cost(sol),
            future_value=future_value,
            objective=sol.objective,
            next_state=nxt,
        )


class CutStageTemplate(StageCore):
    """Stage LP whose future cost is a cut-supported variable rho >= 0."""

    def __init__(self, net, cuts, grid=None, options=None, name="stage"):
        super().__init__(net, grid, options, name)
        lp = self.lp
        self.rho_col = lp.add_var("rho", 0.0, math.inf, 1.0)
        self.cuts = list(cuts or [])
        self.cut_rows = np.empty(len(self.cuts), dtype=int)
        for k, cut in enumerate(self.cuts):
            coeffs = [(int(self.rho_col), 1.0)]
            coeffs += [(int(c), -float(gs)) for c, gs in zip(self.snext_col, cut.g_s)]
            coeffs += [(int(c), -float(gp)) for c, gp in zip(self.p_col, cut.g_p)]
            self.cut_rows[k] = lp.add_con(f"cut_{k}", coeffs, ">=", 0.0)
        self.finalize()

    def set_wind(self, wind):
        super().set_wind(wind)
        for k, cut in enumerate(self.cuts):
            self.lp.rhs[self.cut_rows[k]] = cut.intercept + float(np.dot(cut.g_w, self.wind))

    def extract_decision(self, sol):
        return super().extract_decision(sol, future_value=float(sol.x[self.rho_col]))


def build_stage_lp(net, state, wind, cuts, grid=None, options=None):
    """Assemble one period's LP; the template rides along for extraction."""
    tpl = CutStageTemplate(net, cuts, grid, options)
    if options and options.terminal_salvage and state.t == net.horizon:
        tpl.apply_salvage(options.terminal_salvage)
    tpl.instantiate(state, wind)
    tpl.lp.stage_template = tpl
    return tpl.lp


def extract_decision(net, state, lp, sol):
    tpl = getattr(lp, "stage_template", None)
    if tpl is None:
        raise ValueError("lp was not produced by build_stage_lp")
    if tpl.state is not state and tpl.state.t != state.t:
        raise DimensionMismatch("solution does not match the given state")
    return tpl.extract_decision(sol)


def solve_stage(tpl, state, wind, **tol):
    tpl.instantiate(state, wind)
    return solve(tpl.lp, **tol)
