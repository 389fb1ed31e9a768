import numpy as np
import pytest

from gridsddp.dp import (StateGrid, ValueTable, backward_dp, build_state_grid,
                         simulate_dp_policy)
from gridsddp.network import Bus, Generator, Network, StorageDevice, WindFarm
from gridsddp.stage import initial_state
from gridsddp.wind import WindModel, simulate
from oracles import golden_section


def chain_net(loads, gen_cost=("quad", 0.0, 10.0, 0.0), storage=True, ramp=1e4):
    devices = (StorageDevice(1, 1, 5.0, 60.0, 30.0, 0.95, 0.95, 1.0, 0.0),) if storage else ()
    return Network(
        buses=(Bus(1, True, tuple(loads)),),
        generators=(Generator(1, 1, 0.0, 150.0, ramp, ramp, gen_cost),),
        lines=(), storage_devices=devices,
        wind_farms=(WindFarm(1, 1, 40.0),),
        penalty_m=650.0,
        initial_storage=(5.0,) if storage else (),
        initial_generation=(40.0,), initial_wind=(15.0,))


def det_model(mu=15.0):
    return WindModel(p=1, mu=np.array([mu]), phi=(np.array([[0.0]]),),
                     noise_sd=np.array([0.0]), capacity=np.array([40.0]))


def stoch_model(mu=15.0, phi=0.5, sd=3.0):
    return WindModel(p=1, mu=np.array([mu]), phi=(np.array([[phi]]),),
                     noise_sd=np.array([sd]), capacity=np.array([40.0]))


def test_one_level_grid_collapses_to_chain():
    loads = (40.0, 90.0, 60.0)
    net = chain_net(loads)
    model = det_model()
    grid, trans = build_state_grid(net, model, counts=(1, 1, 2), samples=500, seed=0)
    table = backward_dp(net, grid, trans, T=3)
    # every decision is pinned to the single (s, p) node, wind is constant:
    # F_1 is the summed cost of the resulting deterministic chain
    init = initial_state(net, model)
    scen = simulate(model, [init.w_prev], 3, 1, seed=1)
    start = grid.state_at((0, 0), (0,), 1)
    _, stats = simulate_dp_policy(net, table, grid, trans, start, scen)
    assert stats["mean"] == pytest.approx(table.values[1][(0, 0, 0)], rel=1e-9)


def test_two_period_two_scenario_matches_enumeration():
    # state-free toy: linear cost (exact under the sampled-cost rows), huge
    # ramps, no storage; exhaustive enumeration over the 2x2 scenario tree
    loads = (50.0, 80.0)
    net = chain_net(loads, gen_cost=("quad", 0.0, 7.0, 0.0), storage=False)
    model = stoch_model(mu=15.0, phi=0.4, sd=4.0)
    grid, trans = build_state_grid(net, model, counts=(1, 2, 2), samples=40000, seed=3)
    table = backward_dp(net, grid, trans, T=2)

    def stage_cost(load, w):
        p = min(max(load - w, 0.0), 150.0)
        short = load - w - p
        return 7.0 * p + 650.0 * abs(short) if short > 0 else 7.0 * p

    W = grid.wind_levels[0]
    P = trans[0]
    for w_prev_idx in range(2):
        expected = 0.0
        for w1_idx in range(2):
            c1 = stage_cost(loads[0], W[w1_idx])
            c2 = sum(P[w1_idx, w2_idx] * stage_cost(loads[1], W[w2_idx])
                     for w2_idx in range(2))
            expected += P[w_prev_idx, w1_idx] * (c1 + c2)
        for p_idx in range(2):
            got = table.values[1][(p_idx, w_prev_idx)]
            assert got == pytest.approx(expected, rel=1e-6)


def test_value_table_monotone_in_storage():
    net = chain_net((60.0, 140.0, 80.0), gen_cost=("quad", 0.05, 5.0, 0.0))
    model = stoch_model()
    grid, trans = build_state_grid(net, model, counts=(5, 3, 3), samples=20000, seed=2)
    table = backward_dp(net, grid, trans, T=3)
    for t in range(1, 4):
        vals = table.values[t]
        diffs = np.diff(vals, axis=0)  # storage is the first axis
        assert np.all(diffs <= 1e-7)


def test_grid_refinement_never_raises_f1():
    net = chain_net((60.0, 140.0, 80.0), gen_cost=("quad", 0.05, 5.0, 0.0))
    model = stoch_model()
    coarse_grid, trans = build_state_grid(net, model, counts=(3, 3, 3),
                                          samples=20000, seed=2)
    fine_grid = StateGrid(
        storage_levels=tuple(np.linspace(d.s_min, d.s_max, 5) for d in net.storage_devices),
        generation_levels=tuple(np.linspace(g.p_min, g.p_max, 5) for g in net.generators),
        wind_levels=coarse_grid.wind_levels)
    coarse = backward_dp(net, coarse_grid, trans, T=3)
    fine = backward_dp(net, fine_grid, trans, T=3)
    # both grids share the corner state (s_min, p_min, first wind level)
    corner = (0, 0, 0)
    assert fine.values[1][corner] <= coarse.values[1][corner] + 1e-6


def test_evaluation_count_formula():
    net = chain_net((60.0, 140.0,))
    model = stoch_model()
    grid, trans = build_state_grid(net, model, counts=(2, 3, 4), samples=5000, seed=1)
    table = backward_dp(net, grid, trans, T=2)
    assert table.evaluations_per_period == 2 * 3 * 4 * 4
    assert table.total_evaluations == 2 * table.evaluations_per_period


def test_simulation_statistics_shape():
    net = chain_net((60.0, 140.0, 80.0))
    model = stoch_model()
    grid, trans = build_state_grid(net, model, counts=(3, 3, 3), samples=10000, seed=4)
    table = backward_dp(net, grid, trans, T=3)
    init = initial_state(net, model)
    scen = simulate(model, [init.w_prev], 3, 25, seed=6)
    traj, stats = simulate_dp_policy(net, table, grid, trans, init, scen)
    assert set(stats) == {"min", "max", "mean", "sd", "count"}
    assert stats["count"] == 25
    assert stats["min"] <= stats["mean"] <= stats["max"]
    assert stats["sd"] >= 0
    assert len(traj) == 25 and len(traj[0]) == 3


def test_nearest_mode_dominates_interp():
    # node-pinned decisions with exact node lookups can never beat the
    # convex-envelope relaxation with a continuous decision set
    net = chain_net((60.0, 140.0, 80.0), gen_cost=("quad", 0.05, 5.0, 0.0))
    model = stoch_model()
    grid, trans = build_state_grid(net, model, counts=(3, 3, 2), samples=10000, seed=5)
    interp = backward_dp(net, grid, trans, T=3, mode="interp")
    nearest = backward_dp(net, grid, trans, T=3, mode="nearest")
    for t in range(1, 4):
        assert np.all(interp.values[t] <= nearest.values[t] + 1e-6)


def test_threads_do_not_change_table():
    net = chain_net((60.0, 140.0, 80.0), gen_cost=("quad", 0.05, 5.0, 0.0))
    model = stoch_model()
    grid, trans = build_state_grid(net, model, counts=(4, 3, 3), samples=10000, seed=7)
    one = backward_dp(net, grid, trans, T=3, threads=1)
    four = backward_dp(net, grid, trans, T=3, threads=4)
    for t in range(1, 4):
        assert np.allclose(one.values[t], four.values[t], rtol=1e-12, atol=1e-9)


def test_value_table_csv_dump(tmp_path):
    net = chain_net((60.0, 140.0))
    model = stoch_model()
    grid, trans = build_state_grid(net, model, counts=(2, 2, 2), samples=5000, seed=8)
    table = backward_dp(net, grid, trans, T=2)
    out = tmp_path / "vt.csv"
    table.dump_csv(str(out))
    lines = out.read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == "t,s0,g0,w0,value"
    assert len(lines) == 1 + 2 * 2 * 2 * 2  # periods x grid size
