import math

import numpy as np
import pytest

from gridsddp.errors import DimensionMismatch, SimultaneousChargeDischarge
from gridsddp.lp import OPTIMAL, solve
from gridsddp.network import Bus, Generator, Network, StorageDevice, WindFarm
from gridsddp.sddp import Cut
from gridsddp.stage import (BreakpointGrid, CutStageTemplate, StageOptions,
                            SystemState, build_breakpoints, build_stage_lp,
                            extract_decision, initial_state)
from oracles import TinyInstance, golden_section


def one_bus_net(p_max=200.0, loads=(100.0,), storage=False, vc=0.0,
                cost=("quad", 0.0, 10.0, 0.0), wind_cap=50.0, penalty=1000.0):
    devices = (StorageDevice(1, 1, 5.0, 60.0, 30.0, 0.95, 0.95, 1.0, vc),) if storage else ()
    return Network(
        buses=(Bus(1, True, tuple(loads)),),
        generators=(Generator(1, 1, 0.0, p_max, 1e4, 1e4, cost),),
        lines=(), storage_devices=devices,
        wind_farms=(WindFarm(1, 1, wind_cap),),
        penalty_m=penalty)


def test_build_breakpoints_uniform_quadratic():
    g = Generator(1, 1, 0.0, 100.0, 10.0, 10.0, ("quad", 1.0, 0.0, 0.0))
    pts, costs = build_breakpoints(g, 3)
    assert np.array_equal(pts, [0.0, 50.0, 100.0])
    assert np.array_equal(costs, [0.0, 2500.0, 10000.0])


def test_build_breakpoints_two_point_grid():
    g = Generator(1, 1, 5.0, 80.0, 10.0, 10.0, ("quad", 0.5, 1.0, 2.0))
    pts, costs = build_breakpoints(g, 2)
    assert np.array_equal(pts, [5.0, 80.0])


def test_build_breakpoints_copies_explicit_list():
    g = Generator(1, 1, 0.0, 10.0, 5.0, 5.0, ("pts", ((0.0, 1.0), (10.0, 21.0))))
    pts, costs = build_breakpoints(g, 99)
    assert np.array_equal(pts, [0.0, 10.0])
    assert np.array_equal(costs, [1.0, 21.0])


def test_glp_overestimates_convex_cost_at_midpoints():
    g = Generator(1, 1, 0.0, 100.0, 10.0, 10.0, ("quad", 0.7, 3.0, 11.0))
    pts, costs = build_breakpoints(g, 6)
    mids = (pts[:-1] + pts[1:]) / 2
    interp = np.interp(mids, pts, costs)
    exact = np.array([g.cost_at(p) for p in mids])
    assert np.all(interp >= exact)
    assert np.any(interp > exact + 1e-9)


def test_stage_simple_dispatch():
    net = one_bus_net()
    state = SystemState(1, np.zeros(0), np.array([100.0]), np.array([20.0]))
    lp = build_stage_lp(net, state, np.array([20.0]), [], BreakpointGrid.build(net, 5))
    sol = solve(lp)
    dec = extract_decision(net, state, lp, sol)
    assert dec.generation[0] == pytest.approx(80.0)
    assert dec.immediate_cost == pytest.approx(800.0)
    assert np.all(dec.slack_neg == 0) and np.all(dec.slack_pos == 0)


def test_stage_shortage_uses_slack():
    net = one_bus_net(p_max=50.0)
    state = SystemState(1, np.zeros(0), np.array([50.0]), np.array([20.0]))
    lp = build_stage_lp(net, state, np.array([20.0]), [], BreakpointGrid.build(net, 5))
    sol = solve(lp)
    dec = extract_decision(net, state, lp, sol)
    assert dec.generation[0] == pytest.approx(50.0)
    assert dec.slack_neg[0] == pytest.approx(30.0)
    assert dec.immediate_cost == pytest.approx(500.0 + 30.0 * net.penalty_m)


def test_stage_flow_limit_two_bus():
    # all generation at bus 1, demand 30 at bus 2, line limit 10:
    # the line saturates and the remaining 20 MW is unserved at bus 2
    from gridsddp.network import Line

    M = 1000.0
    net = Network(
        buses=(Bus(1, True, (0.0,)), Bus(2, False, (30.0,))),
        generators=(Generator(1, 1, 0.0, 100.0, 1e4, 1e4, ("quad", 0.0, 1.0, 0.0)),),
        lines=(Line(1, 1, 2, 10.0, 10.0),),
        storage_devices=(), wind_farms=(),
        penalty_m=M)
    state = SystemState(1, np.zeros(0), np.array([50.0]), np.zeros(0))
    lp = build_stage_lp(net, state, np.zeros(0), [], BreakpointGrid.build(net, 3))
    sol = solve(lp)
    dec = extract_decision(net, state, lp, sol)

    # enumeration oracle over candidate line flows: generation covers the
    # exported flow, the rest of bus-2 demand is unserved at penalty M
    flows = np.linspace(-10.0, 10.0, 4001)
    cost = np.where(flows >= 0, flows, 0.0) + M * np.where(flows < 0, -flows, 0.0) \
        + M * (30.0 - flows)
    assert sol.objective == pytest.approx(cost.min(), rel=1e-9)
    assert dec.flows[0] == pytest.approx(10.0)
    assert dec.slack_neg[1] == pytest.approx(20.0)


def test_stage_balance_residuals_tiny(tiny2):
    net, model = tiny2
    tpl = CutStageTemplate(net, [], BreakpointGrid.build(net, 7))
    rng = np.random.default_rng(2)
    for _ in range(20):
        state = SystemState(1, np.array([rng.uniform(4, 25)]),
                            np.array([rng.uniform(0, 150)]),
                            np.array([rng.uniform(0, 40)]))
        wind = np.array([rng.uniform(0, 40)])
        tpl.instantiate(state, wind)
        sol = solve(tpl.lp)
        assert sol.status == OPTIMAL
        for bi, row in enumerate(tpl.balance_row):
            assert abs(sol.row_activity[row] - tpl.lp.rhs[row]) <= 1e-7 * (
                1 + abs(tpl.lp.rhs[row]))


def test_empty_cut_pool_gives_zero_future(tiny2):
    net, _ = tiny2
    state = SystemState(1, np.array([20.0]), np.array([50.0]), np.array([15.0]))
    lp = build_stage_lp(net, state, np.array([15.0]), [], BreakpointGrid.build(net, 5))
    sol = solve(lp)
    assert sol.value("rho") == pytest.approx(0.0, abs=1e-9)


def test_zero_demand_stage_is_all_zero():
    net = one_bus_net(loads=(0.0,), storage=False)
    state = SystemState(1, np.zeros(0), np.array([0.0]), np.array([0.0]))
    lp = build_stage_lp(net, state, np.array([0.0]), [], BreakpointGrid.build(net, 3))
    sol = solve(lp)
    dec = extract_decision(net, state, lp, sol)
    assert dec.immediate_cost == pytest.approx(0.0, abs=1e-9)
    assert dec.generation[0] == pytest.approx(0.0, abs=1e-9)


def test_brute_force_grid_matches_lp(tiny2):
    net, _ = tiny2
    grid = BreakpointGrid.build(net, 9)
    inst = TinyInstance(net, grid.points[0], grid.costs[0])
    tpl = CutStageTemplate(net, [], grid)
    rng = np.random.default_rng(8)
    for _ in range(12):
        s = rng.uniform(4, 25)
        p_prev = rng.uniform(0, 150)
        w = rng.uniform(0, 40)
        t = int(rng.integers(1, 3))
        state = SystemState(t, np.array([s]), np.array([p_prev]), np.array([w]))
        tpl.instantiate(state, np.array([w]))
        sol = solve(tpl.lp)
        oracle = inst.stage_value(t, s, p_prev, w, p_res=601, s_res=481)
        # grid minimum over-estimates the LP optimum by the resolution error,
        # dominated by the imbalance penalty times the step sizes
        slack = net.penalty_m * (150.0 / 600 + 21.0 / 480) + 5.0
        assert sol.objective <= oracle + 1e-7
        assert oracle <= sol.objective + slack


def test_glp_refinement_is_monotone(tiny2):
    net, _ = tiny2
    state = SystemState(2, np.array([15.0]), np.array([80.0]), np.array([20.0]))
    wind = np.array([12.0])
    values = []
    count = 3
    for _ in range(4):
        lp = build_stage_lp(net, state, wind, [], BreakpointGrid.build(net, count))
        values.append(solve(lp).objective)
        count = 2 * count - 1  # nested refinement
    for coarse, fine in zip(values, values[1:]):
        assert fine <= coarse + 1e-8


def test_glp_bounded_below_by_smooth_optimum():
    # storage-free instance: the stage reduces to one generation decision,
    # so a golden-section search on the true quadratic is an exact oracle
    net = one_bus_net(p_max=150.0, loads=(120.0,), cost=("quad", 0.04, 6.0, 25.0))
    g = net.generators[0]
    state = SystemState(1, np.zeros(0), np.array([70.0]), np.array([10.0]))
    wind = np.array([10.0])

    def true_cost(p):
        return g.cost_at(p) + net.penalty_m * abs(120.0 - wind[0] - p)

    _, smooth = golden_section(true_cost, g.p_min, g.p_max)

    count = 3
    prev = np.inf
    for _ in range(5):
        lp = build_stage_lp(net, state, wind, [], BreakpointGrid.build(net, count))
        val = solve(lp).objective
        assert smooth - 1e-8 <= val <= prev + 1e-8
        prev = val
        count = 2 * count - 1


def test_cut_rows_never_decrease_value(tiny2):
    net, _ = tiny2
    state = SystemState(1, np.array([20.0]), np.array([60.0]), np.array([15.0]))
    wind = np.array([15.0])
    grid = BreakpointGrid.build(net, 5)
    base = solve(build_stage_lp(net, state, wind, [], grid)).objective
    cuts = [Cut(t=2, g_s=np.array([-3.0]), g_p=np.array([0.0]),
                g_w=np.array([0.0]), intercept=400.0)]
    with_cut = solve(build_stage_lp(net, state, wind, cuts, grid)).objective
    assert with_cut >= base - 1e-9
    cuts.append(Cut(t=2, g_s=np.array([-5.0]), g_p=np.array([0.0]),
                    g_w=np.array([0.0]), intercept=480.0))
    with_two = solve(build_stage_lp(net, state, wind, cuts, grid)).objective
    assert with_two >= with_cut - 1e-9


def test_dimension_mismatch_raises(tiny2):
    net, _ = tiny2
    state = SystemState(1, np.array([20.0]), np.array([60.0]), np.array([15.0]))
    tpl = CutStageTemplate(net, [], BreakpointGrid.build(net, 5))
    with pytest.raises(DimensionMismatch):
        tpl.instantiate(state, np.array([15.0, 22.0]))
    bad = SystemState(1, np.array([20.0, 30.0]), np.array([60.0]), np.array([15.0]))
    with pytest.raises(DimensionMismatch):
        tpl.instantiate(bad, np.array([15.0]))


def test_simultaneous_charge_discharge_guard(tiny2):
    net, _ = tiny2
    state = SystemState(1, np.array([20.0]), np.array([60.0]), np.array([15.0]))
    lp = build_stage_lp(net, state, np.array([15.0]), [], BreakpointGrid.build(net, 5))
    sol = solve(lp)
    tpl = lp.stage_template
    sol.x[tpl.dpos_col[0]] = 2.0
    sol.x[tpl.dneg_col[0]] = 2.0
    with pytest.raises(SimultaneousChargeDischarge):
        extract_decision(net, state, lp, sol)


def test_terminal_salvage_changes_objective(tiny2):
    net, _ = tiny2
    state = SystemState(2, np.array([15.0]), np.array([80.0]), np.array([20.0]))
    wind = np.array([12.0])
    grid = BreakpointGrid.build(net, 5)
    plain = solve(build_stage_lp(net, state, wind, [], grid)).objective
    opts = StageOptions(terminal_salvage=50.0)
    credited = solve(build_stage_lp(net, state, wind, [], grid, opts)).objective
    assert credited < plain


def test_initial_state_defaults(tiny2):
    net, model = tiny2
    st = initial_state(net, model)
    assert st.t == 1
    assert st.s[0] == pytest.approx(4.0)
    assert st.p_prev[0] == pytest.approx(40.0)
    assert st.w_prev[0] == pytest.approx(15.0)
    assert st.validate_for(net, model.capacity) == []
