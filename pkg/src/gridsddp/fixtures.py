"""Seeded synthetic case builder.

Real IEEE case parameters and utility load/wind data are not bundled;
these generators produce networks with the same shapes (bus/generator/line
counts) so scaling experiments are reproducible anywhere. Generated values
are plausible rather than calibrated.
"""

import os

import numpy as np

from .network import (Bus, Generator, Line, Network, StorageDevice, WindFarm,
                      default_penalty, serialize_case)
from .wind import WindModel, save_wind_model

DAILY_SHAPE = np.array([
    0.82, 0.78, 0.76, 0.75, 0.76, 0.80, 0.87, 0.92, 0.95, 0.96, 0.96, 0.95,
    0.94, 0.93, 0.92, 0.93, 0.97, 1.00, 0.99, 0.96, 0.92, 0.88, 0.85, 0.82,
])


def make_case(buses, generators, lines, storage, wind, horizon=24, seed=0,
              peak_load_fraction=0.75):
    """Random connected network with the requested component counts.

    peak_load_fraction scales total peak demand relative to total
    conventional capacity, keeping the dispatch feasible without slacks.
    """
    if generators > buses or storage > buses or wind > buses:
        raise ValueError("component count exceeds bus count")
    if lines < buses - 1:
        raise ValueError("need at least buses-1 lines for connectivity")
    rng = np.random.default_rng([seed, 0xCA5E])

    shape = DAILY_SHAPE
    if horizon != len(shape):
        idx = np.linspace(0, len(shape) - 1, horizon)
        shape = np.interp(idx, np.arange(len(shape)), shape)

    gen_buses = rng.permutation(buses)[:generators] + 1
    gens = []
    for k, b in enumerate(sorted(gen_buses)):
        p_max = float(rng.uniform(120, 420))
        p_min = round(0.05 * p_max, 2)
        ramp = round(float(rng.uniform(0.35, 0.6)) * p_max, 2)
        a = round(float(rng.uniform(0.01, 0.12)), 4)
        bcoef = round(float(rng.uniform(2.0, 12.0)), 3)
        c = round(float(rng.uniform(50, 400)), 2)
        gens.append(Generator(id=k + 1, bus=int(b), p_min=p_min, p_max=round(p_max, 2),
                              ramp_up=ramp, ramp_down=ramp, cost=("quad", a, bcoef, c)))
    cap_total = sum(g.p_max for g in gens)

    # spanning tree plus random extra edges
    order = rng.permutation(buses) + 1
    edges = set()
    line_rows = []
    for i in range(1, buses):
        a = int(order[i])
        b = int(order[int(rng.integers(0, i))])
        edges.add((min(a, b), max(a, b)))
    while len(edges) < lines:
        a, b = rng.integers(1, buses + 1, size=2)
        if a != b:
            edges.add((min(int(a), int(b)), max(int(a), int(b))))
    for k, (a, b) in enumerate(sorted(edges)):
        line_rows.append(Line(id=k + 1, from_bus=a, to_bus=b,
                              susceptance=round(float(rng.uniform(500, 1800)), 1),
                              flow_limit=round(float(rng.uniform(0.5, 1.2)) * cap_total / max(1, lines // buses + 1), 1)))

    # loads spread over non-generator buses when possible
    load_buses = [b for b in range(1, buses + 1) if b not in set(gen_buses)] or \
        list(range(1, buses + 1))
    weights = rng.uniform(0.5, 1.5, size=len(load_buses))
    weights /= weights.sum()
    peak_total = peak_load_fraction * cap_total
    bus_rows = []
    load_map = dict(zip(load_buses, weights))
    for b in range(1, buses + 1):
        w = load_map.get(b, 0.0)
        profile = tuple(round(float(v), 2) for v in shape * peak_total * w)
        bus_rows.append(Bus(id=b, is_slack=(b == 1), load_profile=profile))

    storage_buses = rng.permutation(buses)[:storage] + 1
    devs = []
    for k, b in enumerate(sorted(storage_buses)):
        s_max = round(float(rng.uniform(0.1, 0.35)) * cap_total, 1)
        devs.append(StorageDevice(
            id=k + 1, bus=int(b), s_min=round(0.2 * s_max, 1), s_max=s_max,
            delta_max=round(0.3 * s_max, 1),
            eff_charge=round(float(rng.uniform(0.88, 0.98)), 3),
            eff_discharge=round(float(rng.uniform(0.88, 0.98)), 3),
            eff_storage=round(float(rng.uniform(0.97, 1.0)), 4),
            variation_cost=0.0))

    wind_buses = rng.permutation(buses)[:wind] + 1
    farms = []
    for k, b in enumerate(sorted(wind_buses)):
        farms.append(WindFarm(id=k + 1, bus=int(b),
                              capacity=round(0.15 * cap_total / wind, 1)))

    net = Network(
        buses=tuple(bus_rows), generators=tuple(gens), lines=tuple(line_rows),
        storage_devices=tuple(devs), wind_farms=tuple(farms),
        penalty_m=round(default_penalty(gens), 1),
        initial_storage=tuple(d.s_min for d in devs),
        initial_generation=tuple(round(0.5 * (g.p_min + g.p_max), 2) for g in gens),
    )
    model = make_wind_model(net, seed=seed)
    return net, model


def make_wind_model(net, capacity_factor=0.3, seed=0):
    """Lag-1 model with 30% capacity factor means and mild persistence."""
    rng = np.random.default_rng([seed, 0x57AB])
    caps = np.array([f.capacity for f in net.wind_farms], dtype=float)
    M = caps.shape[0]
    mu = np.round(capacity_factor * caps, 2)
    phi = np.round(np.diag(rng.uniform(0.55, 0.8, size=M)), 3)
    if M > 1:
        off = rng.uniform(0.0, 0.08, size=(M, M))
        phi = np.round(phi + off - np.diag(np.diag(off)), 3)
        # keep it stationary
        scale = np.max(np.abs(np.linalg.eigvals(phi)))
        if scale >= 0.95:
            phi = np.round(phi * (0.9 / scale), 3)
    sd = np.round(0.22 * mu, 2)
    return WindModel(p=1, mu=mu, phi=(phi,), noise_sd=sd, capacity=caps)


def write_fixture(net, model, case_path):
    """Write case + loads + wind model; model path swaps .grid for .model."""
    serialize_case(net, case_path)
    model_path = os.path.splitext(case_path)[0] + ".model"
    save_wind_model(model, model_path)
    return model_path
