import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsddp.errors import ParseError, SchemaError
from gridsddp.network import (Bus, Generator, Line, Network, StorageDevice,
                              WindFarm, bus_incidence, parse_case,
                              serialize_case, validate)
from oracles import UnionFind

from conftest import case_path


def minimal_case(tmp_path, body):
    path = tmp_path / "case.grid"
    path.write_text(body, encoding="utf-8")
    return str(path)


MINIMAL = """
[options]
penalty_m = 100.0

[buses]
id is_slack
1 true

[generators]
id bus p_min p_max ramp_up ramp_down cost
1 1 0.0 50.0 20.0 20.0 quad:0.0,2.0,0.0
"""


def test_parse_minimal_one_bus(tmp_path):
    net = parse_case(minimal_case(tmp_path, MINIMAL))
    assert len(net.buses) == 1
    assert len(net.generators) == 1
    assert len(net.lines) == 0
    assert net.horizon == 0
    assert validate(net) == []


def test_parse_nine_bus_case():
    net = parse_case(case_path("case9.grid"))
    assert len(net.buses) == 9
    assert len(net.generators) == 3
    assert len(net.lines) == 9
    assert len(net.storage_devices) == 1 and net.storage_devices[0].bus == 5
    assert len(net.wind_farms) == 1 and net.wind_farms[0].bus == 5
    assert sum(g.p_max for g in net.generators) == 820.0
    assert net.horizon == 24
    assert validate(net) == []


def test_parse_unknown_bus_reference(tmp_path):
    bad = MINIMAL + """
[lines]
id from_bus to_bus susceptance flow_limit
1 1 7 10.0 5.0
"""
    with pytest.raises(SchemaError):
        parse_case(minimal_case(tmp_path, bad))


def test_parse_error_carries_location(tmp_path):
    bad = MINIMAL.replace("1 1 0.0 50.0 20.0 20.0 quad:0.0,2.0,0.0",
                          "1 1 0.0 fifty 20.0 20.0 quad:0.0,2.0,0.0")
    with pytest.raises(ParseError) as err:
        parse_case(minimal_case(tmp_path, bad))
    assert err.value.line is not None


def test_missing_section_is_schema_error(tmp_path):
    with pytest.raises(SchemaError):
        parse_case(minimal_case(tmp_path, "[buses]\nid is_slack\n1 true\n"))


def _net(buses, lines=(), **kw):
    defaults = dict(
        generators=(Generator(1, buses[0].id, 0.0, 10.0, 5.0, 5.0, ("quad", 0.0, 1.0, 0.0)),),
        storage_devices=(), wind_farms=(), penalty_m=100.0)
    defaults.update(kw)
    return Network(buses=tuple(buses), lines=tuple(lines), **defaults)


def test_validate_two_slack_buses():
    net = _net([Bus(1, True, ()), Bus(2, True, ())],
               [Line(1, 1, 2, 10.0, 5.0)])
    assert any("multiple slack buses" in v for v in validate(net))


def test_validate_disconnected_network():
    net = _net([Bus(1, True, ()), Bus(2, False, ()), Bus(3, False, ()), Bus(4, False, ())],
               [Line(1, 1, 2, 10.0, 5.0), Line(2, 3, 4, 10.0, 5.0)])
    violations = validate(net)
    assert any("network not connected" in v for v in violations)
    # independent union-find oracle agrees
    uf = UnionFind([b.id for b in net.buses])
    for l in net.lines:
        uf.union(l.from_bus, l.to_bus)
    assert uf.component_count() > 1


def test_validate_penalty_must_exceed_marginal_cost():
    net = _net([Bus(1, True, ())], penalty_m=1.0)
    assert any("penalty_m" in v for v in validate(net))


def test_validate_one_storage_per_bus():
    net = _net([Bus(1, True, ())],
               storage_devices=(StorageDevice(1, 1, 0.0, 10.0, 5.0, 0.9, 0.9, 1.0, 0.0),
                                StorageDevice(2, 1, 0.0, 10.0, 5.0, 0.9, 0.9, 1.0, 0.0)))
    assert any("more than one storage" in v for v in validate(net))


def test_incidence_two_bus():
    net = _net([Bus(1, True, ()), Bus(2, False, ())], [Line(7, 1, 2, 10.0, 5.0)])
    incoming, outgoing = bus_incidence(net)
    assert outgoing[1] == [7] and incoming[2] == [7]
    assert outgoing[2] == [] and incoming[1] == []


def test_incidence_ring():
    k = 11
    buses = [Bus(i, i == 1, ()) for i in range(1, k + 1)]
    lines = [Line(i, i, i % k + 1, 10.0, 5.0) for i in range(1, k + 1)]
    net = _net(buses, lines)
    incoming, outgoing = bus_incidence(net)
    assert all(len(incoming[b.id]) == 1 and len(outgoing[b.id]) == 1 for b in buses)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.data())
def test_incidence_conservation(n, data):
    edges = []
    for i in range(2, n + 1):
        j = data.draw(st.integers(1, i - 1))
        edges.append((j, i))
    extra = data.draw(st.integers(0, 5))
    for _ in range(extra):
        a = data.draw(st.integers(1, n))
        b = data.draw(st.integers(1, n))
        if a != b:
            edges.append((a, b))
    buses = [Bus(i, i == 1, ()) for i in range(1, n + 1)]
    lines = [Line(k + 1, a, b, 10.0, 5.0) for k, (a, b) in enumerate(edges)]
    net = _net(buses, lines)
    incoming, outgoing = bus_incidence(net)
    total = sum(len(incoming[b.id]) + len(outgoing[b.id]) for b in buses)
    assert total == 2 * len(lines)
    # every line id appears exactly once on each side
    seen_in = sorted(i for b in buses for i in incoming[b.id])
    seen_out = sorted(i for b in buses for i in outgoing[b.id])
    assert seen_in == seen_out == sorted(l.id for l in lines)


def test_roundtrip_all_fixtures(tmp_path):
    for name in ("case9", "tiny2", "det1", "dp3g", "policy_a", "policy_b"):
        net = parse_case(case_path(name + ".grid"))
        out = tmp_path / (name + ".grid")
        serialize_case(net, str(out))
        again = parse_case(str(out))
        assert again == net, name


def test_roundtrip_pts_cost(tmp_path):
    body = MINIMAL.replace("quad:0.0,2.0,0.0", "pts:0.0,1.0;25.0,30.5;50.0,99.25")
    net = parse_case(minimal_case(tmp_path, body))
    assert net.generators[0].cost[0] == "pts"
    out = tmp_path / "again.grid"
    serialize_case(net, str(out))
    assert parse_case(str(out)) == net


def test_validated_network_accepted_downstream(tiny2):
    # validate(net) == [] means the stage builder takes it without error
    from gridsddp.stage import BreakpointGrid, SystemState, build_stage_lp
    from gridsddp.lp import solve, OPTIMAL

    net, model = tiny2
    assert validate(net) == []
    state = SystemState(1, np.array(net.s0()), np.array(net.p0()),
                        model.mu.copy())
    lp = build_stage_lp(net, state, model.mu, [], BreakpointGrid.build(net, 5))
    assert solve(lp).status == OPTIMAL


def test_nine_bus_topology_edges():
    net = parse_case(case_path("case9.grid"))
    edges = {(l.from_bus, l.to_bus) for l in net.lines}
    assert edges == {(1, 4), (2, 7), (3, 9), (4, 5), (4, 6), (5, 7), (6, 9),
                     (7, 8), (8, 9)}
    incoming, outgoing = bus_incidence(net)
    total = sum(len(incoming[b.id]) + len(outgoing[b.id]) for b in net.buses)
    assert total == 2 * len(net.lines)
