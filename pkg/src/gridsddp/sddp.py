"""SDDP engine: backward cut construction, forward simulation and bounds,
iteration and stopping logic.

Each backward pass adds one cut per sampled state per period, built from the
duals of J conditional-scenario stage solves: storage-evolution duals scaled
by storage efficiency, ramp-row duals filtered by complementary slackness,
and wind-bus balance plus active-cut duals pushed through the AR(1) matrix.
The forward pass evaluates the current policy on a fixed set of L wind paths
(common random numbers across iterations, which makes the lower-bound
sequence monotone) and estimates the upper-bound confidence interval.
"""

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import wind as wind_process
from .errors import MaxItersExceeded, SolveFailed, UnsupportedLag
from .lp import OPTIMAL, solve
from .stage import CutStageTemplate, StageOptions, SystemState, initial_state

_FWD_STREAM = 0x46574400
_BWD_STREAM = 0x42574400
_SMP_STREAM = 0x534D5000

BIND_TOL = 1e-6
CUT_DEDUP_TOL = 1e-9


@dataclass(frozen=True)
class CutProvenance:
    iteration: int
    t: int
    state_index: int
    state: SystemState
    winds: np.ndarray   # (J, M) conditional wind samples the cut averaged over
    value: float        # sampled expected stage value at the generating state


@dataclass(frozen=True)
class Cut:
    """One supporting hyperplane of the expected cost-to-go at period t."""

    t: int
    g_s: np.ndarray
    g_p: np.ndarray
    g_w: np.ndarray
    intercept: float
    provenance: CutProvenance = None

    def value_at(self, s, p_prev, w_prev):
        return self.intercept + float(self.g_s @ np.asarray(s)) \
            + float(self.g_p @ np.asarray(p_prev)) + float(self.g_w @ np.asarray(w_prev))

    def is_tight_at_origin(self, rel_tol=1e-6):
        if self.provenance is None:
            return True
        st = self.provenance.state
        v = self.value_at(st.s, st.p_prev, st.w_prev)
        return abs(v - self.provenance.value) <= rel_tol * (1.0 + abs(self.provenance.value))


class CutPool:
    """Append-only cut lists per period; exact duplicates are dropped."""

    def __init__(self, horizon):
        self.horizon = horizon
        self._by_t = {t: [] for t in range(1, horizon + 2)}

    def at(self, t):
        return self._by_t.get(t, [])

    def add(self, cut):
        for old in self._by_t[cut.t]:
            if (np.allclose(old.g_s, cut.g_s, rtol=CUT_DEDUP_TOL, atol=CUT_DEDUP_TOL)
                    and np.allclose(old.g_p, cut.g_p, rtol=CUT_DEDUP_TOL, atol=CUT_DEDUP_TOL)
                    and np.allclose(old.g_w, cut.g_w, rtol=CUT_DEDUP_TOL, atol=CUT_DEDUP_TOL)
                    and abs(old.intercept - cut.intercept)
                    <= CUT_DEDUP_TOL * (1.0 + abs(cut.intercept))):
                return False
        self._by_t[cut.t].append(cut)
        return True

    def counts(self):
        return {t: len(self._by_t[t]) for t in range(1, self.horizon + 1)}

    def total(self):
        return sum(len(v) for v in self._by_t.values())

    def all_cuts(self):
        for t in range(1, self.horizon + 1):
            for cut in self._by_t[t]:
                yield cut


@dataclass(frozen=True)
class BoundEstimate:
    lower_bound: float
    upper_mean: float
    upper_sd: float
    sample_count: int
    ci: tuple
    alpha: float

    def lower_in_ci(self, slack=1e-9):
        lo, hi = self.ci
        pad = slack * (1.0 + abs(self.upper_mean))
        return lo - pad <= self.lower_bound <= hi + pad


@dataclass
class SddpConfig:
    backward_samples: int = 25   # I: states per period per backward pass
    scenarios: int = 25          # J: conditional wind draws per state
    forward_samples: int = 25    # L: forward simulation paths
    max_iters: int = 10
    alpha: float = 0.05
    stop_rule: str = "ci"        # "ci" or "fixed"
    seed: int = 0
    threads: int = 1
    scenario_sampling: str = "stratified"  # "stratified" or "random"


def norm_ppf(q):
    """Standard normal quantile (Acklam's rational approximation, ~1e-9)."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile must be in (0, 1)")
    a = [-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00]
    b = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01]
    c = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00]
    d = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00]
    plow, phigh = 0.02425, 1 - 0.02425
    if q < plow:
        u = math.sqrt(-2 * math.log(q))
        return (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) / \
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1)
    if q > phigh:
        u = math.sqrt(-2 * math.log(1 - q))
        return -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) / \
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1)
    u = q - 0.5
    r = u * u
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u / \
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)


def _norm_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def stratified_innovations(noise_sd, count):
    """Equiprobable conditional means of the Gaussian innovation, (J, M).

    Replacing the innovation with the conditional mean over each of J
    equiprobable slices is a mean-preserving contraction, so stage values
    computed over these scenarios never exceed the true expectation of a
    convex value function. Cuts built on them stay valid lower bounds.
    Components are comonotone across farms.
    """
    noise_sd = np.atleast_1d(np.asarray(noise_sd, dtype=float))
    if count == 1:
        return np.zeros((1, noise_sd.shape[0]))
    edges = [norm_ppf(j / count) for j in range(1, count)]
    pdf = [0.0] + [_norm_pdf(z) for z in edges] + [0.0]
    means = np.array([count * (pdf[j] - pdf[j + 1]) for j in range(count)])
    return means[:, None] * noise_sd[None, :]


def summarize_forward(first_stage, totals, alpha):
    """Bound estimate from forward-path first-stage objectives and totals:
    the lower bound averages first-stage objectives, the upper estimate is
    the sample mean of path costs with its normal confidence interval."""
    first_stage = np.asarray(first_stage, dtype=float)
    totals = np.asarray(totals, dtype=float)
    L = totals.shape[0]
    lower = float(first_stage.mean())
    upper = float(totals.mean())
    sd = float(totals.std(ddof=1)) if L > 1 else 0.0
    z = norm_ppf(1.0 - alpha / 2.0)
    half = z * sd / math.sqrt(L)
    return BoundEstimate(lower_bound=lower, upper_mean=upper, upper_sd=sd,
                         sample_count=L, ci=(upper - half, upper + half),
                         alpha=alpha)


def compute_cut(results, probabilities, state, net, model, next_cuts, template=None,
                iteration=0, state_index=0):
    """Assemble one cut from J optimal scenario solves at a sampled state.

    results: sequence of (LpSolution, wind) or (LpSolution, StageDecision, wind).
    """
    omega = np.asarray(probabilities, dtype=float)
    if abs(float(omega.sum()) - 1.0) > 1e-12:
        raise ValueError("scenario probabilities must sum to 1")
    sols, winds = [], []
    for item in results:
        if len(item) == 2:
            sol, w = item
        else:
            sol, _, w = item
        if sol.status != OPTIMAL:
            raise SolveFailed(f"scenario solve not optimal: {sol.status}", t=state.t)
        sols.append(sol)
        winds.append(np.asarray(w, dtype=float))

    ns = len(net.storage_devices)
    ng = len(net.generators)
    nm = len(net.wind_farms)
    phi1 = model.phi[0] if model.p >= 1 else np.zeros((nm, nm))

    if template is not None:
        evol_rows = template.evol_row
        ramp_lo_rows = template.ramp_lo_row
        ramp_up_rows = template.ramp_up_row
        wind_rows = template.wind_balance_rows
        cut_rows = template.cut_rows
    else:
        prob = sols[0]._problem
        evol_rows = np.array([prob.con_index(f"evol_{d.id}") for d in net.storage_devices], dtype=int)
        ramp_lo_rows = np.array([prob.con_index(f"ramp_lo_{g.id}") for g in net.generators], dtype=int)
        ramp_up_rows = np.array([prob.con_index(f"ramp_up_{g.id}") for g in net.generators], dtype=int)
        wind_rows = np.array([prob.con_index(f"balance_{f.bus}") for f in net.wind_farms], dtype=int)
        cut_rows = np.array([prob.con_index(f"cut_{k}") for k in range(len(next_cuts))], dtype=int)

    alpha_vec = np.array([d.eff_storage for d in net.storage_devices])
    gw_next = np.array([c.g_w for c in next_cuts]).reshape(len(next_cuts), nm) \
        if next_cuts else np.zeros((0, nm))

    g_s = np.zeros(ns)
    g_p = np.zeros(ng)
    g_w = np.zeros(nm)
    value = 0.0
    for sol, w, wgt in zip(sols, winds, omega):
        value += wgt * sol.objective
        if ns:
            g_s += wgt * sol.duals[evol_rows]
        for gi, gen in enumerate(net.generators):
            # rhs values recomputed from the state (the template may have
            # been re-instantiated since this solve); ties between ramp
            # value and static limit count as ramp-side
            ramp_lo = state.p_prev[gi] - gen.ramp_down
            ramp_up = state.p_prev[gi] + gen.ramp_up
            if ramp_lo >= gen.p_min:
                row = ramp_lo_rows[gi]
                if abs(sol.row_activity[row] - ramp_lo) <= BIND_TOL * (1.0 + abs(ramp_lo)):
                    g_p[gi] += wgt * sol.duals[row]
            if ramp_up <= gen.p_max:
                row = ramp_up_rows[gi]
                if abs(sol.row_activity[row] - ramp_up) <= BIND_TOL * (1.0 + abs(ramp_up)):
                    g_p[gi] += wgt * sol.duals[row]
        if nm:
            v = -sol.duals[wind_rows]
            if len(next_cuts):
                v = v + sol.duals[cut_rows] @ gw_next
            g_w += wgt * (phi1.T @ v)
    if ns:
        g_s *= alpha_vec

    intercept = value - float(g_s @ state.s) - float(g_p @ state.p_prev) \
        - float(g_w @ state.w_prev)
    cut = Cut(t=state.t, g_s=g_s, g_p=g_p, g_w=g_w, intercept=intercept,
              provenance=CutProvenance(iteration=iteration, t=state.t,
                                       state_index=state_index, state=state,
                                       winds=np.array(winds), value=value))
    if not cut.is_tight_at_origin():
        raise SolveFailed("cut not tight at its generating state", t=state.t)
    return cut


class SddpEngine:
    """Drives backward/forward passes over one network + wind model."""

    def __init__(self, net, model, grid=None, options=None, config=None):
        if model.p != 1:
            raise UnsupportedLag("SDDP state carries one lagged wind vector; "
                                 "use a lag-1 model")
        self.net = net
        self.model = model
        self.grid = grid
        self.options = options or StageOptions()
        self.config = config or SddpConfig()
        self.T = net.horizon
        self.pool = CutPool(self.T)

    # -- templates ----------------------------------------------------------

    def _template(self, t):
        tpl = CutStageTemplate(self.net, self.pool.at(t + 1), self.grid, self.options,
                               name=f"stage_t{t}")
        if t == self.T and self.options.terminal_salvage:
            tpl.apply_salvage(self.options.terminal_salvage)
        return tpl

    # -- sampling -----------------------------------------------------------

    def uniform_states(self, iteration):
        """First-pass trial states: uniform within physical bounds."""
        net, cfg = self.net, self.config
        rng = np.random.default_rng([cfg.seed, _SMP_STREAM, iteration])
        samples = {}
        for t in range(1, self.T + 1):
            per_t = []
            for _ in range(cfg.backward_samples):
                s = np.array([rng.uniform(d.s_min, d.s_max) for d in net.storage_devices])
                p = np.array([rng.uniform(g.p_min, g.p_max) for g in net.generators])
                w = np.array([rng.uniform(0.0, f.capacity) for f in net.wind_farms])
                per_t.append(SystemState(t=t, s=s, p_prev=p, w_prev=w))
            samples[t] = per_t
        return samples

    def resample_visited(self, visited, iteration):
        """Pick I states per period from the forward-visited ones."""
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, _SMP_STREAM, iteration])
        samples = {}
        for t in range(1, self.T + 1):
            pool = visited[t]
            idx = rng.integers(0, len(pool), size=cfg.backward_samples)
            samples[t] = [pool[i] for i in idx]
        return samples

    # -- backward -----------------------------------------------------------

    def backward_pass(self, samples, iteration):
        """Append one cut per sampled state per period, walking t = T..1."""
        cfg = self.config
        nm = len(self.net.wind_farms)
        if cfg.scenario_sampling == "stratified":
            strat = stratified_innovations(self.model.noise_sd, cfg.scenarios)
            noise = np.broadcast_to(
                strat, (self.T, cfg.backward_samples, cfg.scenarios, nm))
        else:
            rng = np.random.default_rng([cfg.seed, _BWD_STREAM, iteration])
            noise = rng.normal(0.0, 1.0, size=(self.T, cfg.backward_samples,
                                               cfg.scenarios, nm))
            noise = noise * self.model.noise_sd
        added = 0
        omega = np.full(cfg.scenarios, 1.0 / cfg.scenarios)
        for t in range(self.T, 0, -1):
            next_cuts = self.pool.at(t + 1)
            local = threading.local()

            def solve_state(i, state, t=t):
                # one template per worker thread; warm chain restarts per
                # state so thread count never changes the solve sequence
                tpl = getattr(local, "tpl", None)
                if tpl is None:
                    tpl = self._template(t)
                    local.tpl = tpl
                warm = None
                results = []
                for j in range(cfg.scenarios):
                    w = wind_process.step(self.model, [state.w_prev],
                                          noise[t - 1, i, j])
                    tpl.instantiate(state, w)
                    sol = solve(tpl.lp, warm=warm)
                    if sol.status != OPTIMAL:
                        raise SolveFailed(f"backward stage LP {sol.status}",
                                          t=t, i=i, j=j)
                    warm = sol
                    results.append((sol, w))
                return results, tpl

            states = list(enumerate(samples[t]))
            if cfg.threads > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool_exec:
                    outcomes = list(pool_exec.map(lambda iv: solve_state(*iv), states))
            else:
                outcomes = [solve_state(i, st) for i, st in states]

            for (i, state), (results, tpl) in zip(states, outcomes):
                cut = compute_cut(results, omega, state, self.net, self.model,
                                  next_cuts, template=tpl, iteration=iteration,
                                  state_index=i)
                if self.pool.add(cut):
                    added += 1
        return added

    # -- forward ------------------------------------------------------------

    def forward_paths(self):
        """The L common-random-number wind paths reused by every iteration."""
        cfg = self.config
        init = initial_state(self.net, self.model)
        return wind_process.simulate(self.model, [init.w_prev], self.T,
                                     cfg.forward_samples, [cfg.seed, _FWD_STREAM])

    def forward_pass(self, wind_paths=None, init=None):
        """Evaluate the current policy; returns (trajectories, bounds, visited)."""
        cfg = self.config
        if wind_paths is None:
            wind_paths = self.forward_paths()
        L = wind_paths.shape[0]
        if init is None:
            init = initial_state(self.net, self.model)
        templates = {t: self._template(t) for t in range(1, self.T + 1)}

        first_stage = np.zeros(L)
        totals = np.zeros(L)
        visited = {t: [] for t in range(1, self.T + 1)}
        trajectories = []
        warm = {t: None for t in range(1, self.T + 1)}
        for l in range(L):
            state = init
            path = []
            for t in range(1, self.T + 1):
                visited[t].append(state)
                tpl = templates[t]
                tpl.instantiate(state, wind_paths[l, t - 1])
                sol = solve(tpl.lp, warm=warm[t])
                if sol.status != OPTIMAL:
                    raise SolveFailed(f"forward stage LP {sol.status}", t=t, i=l)
                warm[t] = sol
                dec = tpl.extract_decision(sol)
                totals[l] += dec.immediate_cost
                if t == 1:
                    first_stage[l] = sol.objective
                path.append(dec)
                state = dec.next_state
            trajectories.append(path)

        bounds = summarize_forward(first_stage, totals, cfg.alpha)
        return trajectories, bounds, visited

    # -- outer loop ---------------------------------------------------------

    def run(self):
        cfg = self.config
        wind_paths = self.forward_paths()
        history = []
        trajectories = None
        visited = None
        for iteration in range(1, cfg.max_iters + 1):
            if visited is None:
                samples = self.uniform_states(iteration)
            else:
                samples = self.resample_visited(visited, iteration)
            self.backward_pass(samples, iteration)
            trajectories, bounds, visited = self.forward_pass(wind_paths)
            history.append(bounds)
            if cfg.stop_rule == "ci" and bounds.lower_in_ci():
                return RunResult(pool=self.pool, history=history,
                                 trajectories=trajectories, iterations=iteration,
                                 wind_paths=wind_paths)
        if cfg.stop_rule == "fixed":
            return RunResult(pool=self.pool, history=history, trajectories=trajectories,
                             iterations=cfg.max_iters, wind_paths=wind_paths)
        raise MaxItersExceeded(
            f"lower bound never entered the confidence interval in {cfg.max_iters} iterations",
            bounds=history[-1], history=history)


@dataclass
class RunResult:
    pool: CutPool
    history: list
    trajectories: list
    iterations: int
    wind_paths: np.ndarray

    @property
    def bounds(self):
        return self.history[-1]


def backward_pass(net, model, pool, samples, scenarios, seed, grid=None, options=None,
                  iteration=1):
    """Module-level wrapper: one backward pass over an existing pool."""
    engine = SddpEngine(net, model, grid, options,
                        SddpConfig(backward_samples=max(len(v) for v in samples.values()),
                                   scenarios=scenarios, seed=seed))
    engine.pool = pool
    engine.backward_pass(samples, iteration)
    return pool


def forward_pass(net, model, pool, initial, paths, seed, grid=None, options=None):
    """Module-level wrapper: evaluate the policy in `pool` over `paths` paths."""
    cfg = SddpConfig(forward_samples=paths, seed=seed)
    engine = SddpEngine(net, model, grid, options, cfg)
    engine.pool = pool
    wind_paths = wind_process.simulate(model, [initial.w_prev], net.horizon,
                                       paths, [seed, _FWD_STREAM])
    return engine.forward_pass(wind_paths, init=initial)


def run(net, model, config, grid=None, options=None):
    return SddpEngine(net, model, grid, options, config).run()
