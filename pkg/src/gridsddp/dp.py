"""Tabular stochastic DP baseline over a discretized state grid.

The cost-to-go table is indexed by (storage levels) x (generation levels) x
(wind levels); wind transitions come from the discretized AR chain. Inside
each stage LP the next-period table enters as a convex-combination over the
(storage, generation) grid nodes, which keeps the problem linear; a strict
look-up mode ("nearest") that pins decisions to grid nodes is available for
comparison. The backward recursion deliberately solves one LP per
(state, next-wind) pair, mirroring the reference procedure's evaluation
count rather than caching the repeated solves.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import wind as wind_process
from .errors import SolveFailed
from .lp import INFEASIBLE, OPTIMAL, solve
from .stage import CutStageTemplate, StageCore, StageOptions, SystemState


@dataclass(frozen=True)
class StateGrid:
    storage_levels: tuple     # one array per device
    generation_levels: tuple  # one array per generator
    wind_levels: np.ndarray   # (M, W)

    @property
    def sp_shape(self):
        return tuple(len(v) for v in self.storage_levels) + \
            tuple(len(v) for v in self.generation_levels)

    @property
    def w_shape(self):
        return tuple(len(row) for row in self.wind_levels)

    @property
    def shape(self):
        return self.sp_shape + self.w_shape

    def size(self):
        return int(np.prod(self.shape)) if self.shape else 1

    def state_at(self, sp_idx, w_idx, t):
        ns = len(self.storage_levels)
        s = np.array([self.storage_levels[j][sp_idx[j]] for j in range(ns)])
        p = np.array([self.generation_levels[g][sp_idx[ns + g]]
                      for g in range(len(self.generation_levels))])
        w = np.array([self.wind_levels[m][w_idx[m]] for m in range(len(self.wind_levels))])
        return SystemState(t=t, s=s, p_prev=p, w_prev=w)

    def wind_vector(self, w_idx):
        return np.array([self.wind_levels[m][w_idx[m]] for m in range(len(self.wind_levels))])


def build_state_grid(net, model, counts=(6, 6, 7), samples=20000, seed=0):
    """Uniform storage/generation grids plus the discretized wind chain.

    A single wind level degenerates to the median of the stationary
    marginal with a self-transition (discretize itself requires >= 2).
    """
    s_count, g_count, w_count = counts
    storage = tuple(np.linspace(d.s_min, d.s_max, s_count) for d in net.storage_devices)
    gen = tuple(np.linspace(g.p_min, g.p_max, g_count) for g in net.generators)
    if w_count == 1:
        path = wind_process.simulate(model, [model.mu], 500 + samples, 1, seed)[0, 500:]
        levels = np.median(path, axis=0)[:, None]
        transitions = [np.ones((1, 1)) for _ in range(model.n_farms)]
    else:
        levels, transitions = wind_process.discretize(model, w_count, samples, seed)
    return StateGrid(storage_levels=storage, generation_levels=gen,
                     wind_levels=levels), transitions


@dataclass
class ValueTable:
    values: dict              # period -> ndarray over grid.shape; T+1 is zeros
    grid: StateGrid
    horizon: int
    evaluations_per_period: int
    total_evaluations: int

    def dump_csv(self, path):
        ns = len(self.grid.storage_levels)
        ng = len(self.grid.generation_levels)
        nm = len(self.grid.wind_levels)
        header = ["t"] + [f"s{j}" for j in range(ns)] + [f"g{g}" for g in range(ng)] \
            + [f"w{m}" for m in range(nm)] + ["value"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(1, self.horizon + 1):
                table = self.values[t]
                for idx in np.ndindex(*table.shape):
                    writer.writerow([t] + list(idx) + [format(table[idx], ".10g")])


class InterpStageTemplate(StageCore):
    """Stage LP whose future cost is a convex combination of grid nodes."""

    def __init__(self, net, grid, grid_bp=None, options=None, name="dp_stage"):
        super().__init__(net, grid_bp, options, name)
        self.state_grid = grid
        lp = self.lp
        sp_shape = grid.sp_shape
        nodes = list(np.ndindex(*sp_shape)) if sp_shape else [()]
        self.nodes = nodes
        ns = len(grid.storage_levels)
        ng = len(grid.generation_levels)
        self.xi_cols = np.array([lp.add_var(f"xi_{k}", 0.0, 1.0, 0.0)
                                 for k in range(len(nodes))], dtype=int)
        lp.add_con("interp_sum", [(int(c), 1.0) for c in self.xi_cols], "=", 1.0)
        for j in range(ns):
            coeffs = [(int(self.snext_col[j]), -1.0)]
            coeffs += [(int(c), float(grid.storage_levels[j][node[j]]))
                       for c, node in zip(self.xi_cols, nodes)]
            lp.add_con(f"interp_s_{j}", coeffs, "=", 0.0)
        for g in range(ng):
            coeffs = [(int(self.p_col[g]), -1.0)]
            coeffs += [(int(c), float(grid.generation_levels[g][node[ns + g]]))
                       for c, node in zip(self.xi_cols, nodes)]
            lp.add_con(f"interp_p_{g}", coeffs, "=", 0.0)
        self.finalize()

    def set_future(self, flat_values):
        """Poke next-period table values (C-order over (s, p) nodes)."""
        self.lp.obj[self.xi_cols] = flat_values

    def extract_decision(self, sol):
        future = float(self.lp.obj[self.xi_cols] @ sol.x[self.xi_cols])
        return super().extract_decision(sol, future_value=future)


def backward_dp(net, grid, transitions, T, grid_bp=None, options=None, mode="interp",
                threads=1):
    """Cost-to-go tables for t = 1..T+1 plus evaluation accounting.

    One LP is solved per (grid state, next wind level) pair, exactly the
    states x transitions product. Grid chunks may run on worker threads;
    the table contents do not depend on the chunking because only optimal
    objective values (unique across alternative optima) are stored.
    """
    options = options or StageOptions()
    sp_shape = grid.sp_shape
    w_shape = grid.w_shape
    full_shape = sp_shape + w_shape
    w_indices = list(np.ndindex(*w_shape)) if w_shape else [()]
    sp_indices = list(np.ndindex(*sp_shape)) if sp_shape else [()]

    trans_prob = _joint_transitions(transitions, w_indices)

    values = {T + 1: np.zeros(full_shape)}
    evaluations = 0
    per_period = 0

    def run_chunk(t, chunk, nxt, table):
        tpl = CutStageTemplate(net, [], grid_bp, options) if t == T \
            else InterpStageTemplate(net, grid, grid_bp, options)
        if t == T and options.terminal_salvage:
            tpl.apply_salvage(options.terminal_salvage)
        count = 0
        warm = None
        for sp_idx in chunk:
            state = grid.state_at(sp_idx, w_indices[0], t)
            tpl.set_state(state)
            for wp_pos, w_prev_idx in enumerate(w_indices):
                total = 0.0
                for wn_pos, w_next_idx in enumerate(w_indices):
                    wind_vec = grid.wind_vector(w_next_idx)
                    if t < T:
                        sel = (slice(None),) * len(sp_shape) + w_next_idx
                        tpl.set_future(nxt[sel].reshape(-1))
                    if mode == "interp" or t == T:
                        tpl.set_wind(wind_vec)
                        sol = solve(tpl.lp, warm=warm)
                        if sol.status != OPTIMAL:
                            raise SolveFailed(
                                f"DP stage LP {sol.status} at t={t} state={sp_idx}+{w_prev_idx}",
                                t=t)
                        warm = sol
                        val = sol.objective
                    else:
                        val = _nearest_mode_value(net, grid, tpl, state, wind_vec,
                                                  nxt, w_next_idx)
                    count += 1
                    total += trans_prob[wp_pos, wn_pos] * val
                table[sp_idx + w_prev_idx] = total
        return count

    for t in range(T, 0, -1):
        nxt = values[t + 1]
        table = np.empty(full_shape)
        if threads > 1 and len(sp_indices) > 1:
            k = min(threads, len(sp_indices))
            chunks = [sp_indices[i::k] for i in range(k)]
            with ThreadPoolExecutor(max_workers=k) as pool:
                counts = list(pool.map(lambda ch: run_chunk(t, ch, nxt, table), chunks))
            per_period = sum(counts)
        else:
            per_period = run_chunk(t, sp_indices, nxt, table)
        evaluations += per_period
        values[t] = table

    return ValueTable(values=values, grid=grid, horizon=T,
                      evaluations_per_period=per_period, total_evaluations=evaluations)


def _joint_transitions(transitions, w_indices):
    """Product over farms of marginal transition probabilities."""
    W = len(w_indices)
    out = np.ones((W, W))
    for a, ia in enumerate(w_indices):
        for b, ib in enumerate(w_indices):
            p = 1.0
            for m, mat in enumerate(transitions):
                p *= mat[ia[m], ib[m]]
            out[a, b] = p
    return out


def _nearest_mode_value(net, grid, tpl, state, wind_vec, nxt, w_next_idx):
    """Strict look-up mode: decisions pinned to grid nodes, best node wins."""
    ns = len(grid.storage_levels)
    ng = len(grid.generation_levels)
    lp = tpl.lp
    best = math.inf
    saved_bounds = [(lp.lb[c], lp.ub[c]) for c in tpl.snext_col]
    saved_rhs = [(lp.rhs[tpl.ramp_lo_row[g]], lp.rhs[tpl.ramp_up_row[g]]) for g in range(ng)]
    xi_saved = lp.lb[tpl.xi_cols].copy() if hasattr(tpl, "xi_cols") else None
    for node in tpl.nodes:
        p_node = [grid.generation_levels[g][node[ns + g]] for g in range(ng)]
        feasible = True
        for g in range(ng):
            if not lp.rhs[tpl.ramp_lo_row[g]] - 1e-9 <= p_node[g] <= lp.rhs[tpl.ramp_up_row[g]] + 1e-9:
                feasible = False
                break
        if not feasible:
            continue
        for j in range(ns):
            v = grid.storage_levels[j][node[j]]
            lp.lb[tpl.snext_col[j]] = v
            lp.ub[tpl.snext_col[j]] = v
        for g in range(ng):
            lp.rhs[tpl.ramp_lo_row[g]] = p_node[g]
            lp.rhs[tpl.ramp_up_row[g]] = p_node[g]
        tpl.set_wind(wind_vec)
        if xi_saved is not None:
            # pin the interpolation onto this node so the future term is exact
            lp.lb[tpl.xi_cols] = 0.0
            lp.ub[tpl.xi_cols] = 0.0
            k = tpl.nodes.index(node)
            lp.lb[tpl.xi_cols[k]] = 1.0
            lp.ub[tpl.xi_cols[k]] = 1.0
        sol = solve(lp)
        if sol.status == OPTIMAL:
            best = min(best, sol.objective)
        elif sol.status != INFEASIBLE:
            raise SolveFailed(f"DP nearest-mode stage LP {sol.status}")
        # restore pinned data
        for j in range(ns):
            lp.lb[tpl.snext_col[j]], lp.ub[tpl.snext_col[j]] = saved_bounds[j]
        for g in range(ng):
            lp.rhs[tpl.ramp_lo_row[g]], lp.rhs[tpl.ramp_up_row[g]] = saved_rhs[g]
        if xi_saved is not None:
            lp.lb[tpl.xi_cols] = 0.0
            lp.ub[tpl.xi_cols] = 1.0
    if best is math.inf:
        raise SolveFailed("no feasible grid node in nearest mode")
    return best


def simulate_dp_policy(net, table, grid, transitions, initial, scenarios,
                       grid_bp=None, options=None, mode="interp"):
    """Roll the DP policy forward on continuous states over given scenarios.

    scenarios: (L, T, M) wind realizations. Returns (trajectories, stats).
    """
    options = options or StageOptions()
    T = table.horizon
    L = scenarios.shape[0]
    interp_tpl = InterpStageTemplate(net, grid, grid_bp, options) if T > 1 else None
    terminal_tpl = CutStageTemplate(net, [], grid_bp, options)
    if options.terminal_salvage:
        terminal_tpl.apply_salvage(options.terminal_salvage)
    sp_rank = len(grid.sp_shape)

    totals = np.zeros(L)
    trajectories = []
    warm = {True: None, False: None}  # per-template warm basis
    for l in range(L):
        state = initial
        path = []
        for t in range(1, T + 1):
            w_t = scenarios[l, t - 1]
            terminal = t == T
            tpl = terminal_tpl if terminal else interp_tpl
            tpl.set_state(state)
            if t < T:
                w_idx = tuple(wind_process.level_index(grid.wind_levels, w_t))
                sel = (slice(None),) * sp_rank + w_idx
                tpl.set_future(table.values[t + 1][sel].reshape(-1))
            tpl.set_wind(w_t)
            sol = solve(tpl.lp, warm=warm[terminal])
            if sol.status != OPTIMAL:
                raise SolveFailed(f"DP policy stage LP {sol.status}", t=t, i=l)
            warm[terminal] = sol
            dec = tpl.extract_decision(sol)
            totals[l] += dec.immediate_cost
            path.append(dec)
            state = dec.next_state
        trajectories.append(path)

    stats = {
        "min": float(totals.min()),
        "max": float(totals.max()),
        "mean": float(totals.mean()),
        "sd": float(totals.std(ddof=1)) if L > 1 else 0.0,
        "count": L,
    }
    return trajectories, stats
