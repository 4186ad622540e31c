from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bpr
from trustroute.latency import (
    FlowDomainError,
    FlowVector,
    beckmann_potential,
    edge_congestion,
    edge_latency,
    path_congestion,
    path_latency,
    total_congestion,
)
from trustroute.net import Commodity, Edge, Network, Path, build_path_set

E = Edge(1, 1, 2, 10.0, 10.0)


def test_edge_latency_examples():
    assert edge_latency(E, 0) == 10.0
    assert edge_latency(E, 10) == pytest.approx(11.5, abs=1e-12)
    assert edge_latency(E, 5) == pytest.approx(10.09375, abs=1e-12)


def test_negative_flow_rejected():
    with pytest.raises(FlowDomainError):
        edge_latency(E, -1.0)


def test_non_integer_beta_matches_formula():
    e = Edge(1, 1, 2, 3.0, 7.0, lam=0.4, beta=2.5)
    assert edge_latency(e, 4.0) == pytest.approx(bpr(3.0, 7.0, 4.0, 0.4, 2.5), rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e4), st.floats(0, 1e4))
def test_monotone(f1, f2):
    lo, hi = sorted((f1, f2))
    assert edge_latency(E, lo) <= edge_latency(E, hi)


def two_edge_path():
    net = Network.from_edges([Edge(1, 1, 2, 10, 10), Edge(2, 2, 3, 10, 10)])
    return net, Path((1, 2))


def test_path_latency_examples():
    net, p = two_edge_path()
    f = FlowVector.from_edge_flows(net, {1: 10.0, 2: 0.0})
    assert path_latency(p, f) == pytest.approx(21.5)
    f0 = FlowVector.from_edge_flows(net, {1: 0.0, 2: 0.0})
    assert path_latency(Path((1,)), f0) == 10.0


def test_path_latency_on_diamond_is_edge_sum(diamond):
    f = FlowVector.from_edge_flows(diamond, {1: 3.0, 2: 1.0, 3: 7.5, 4: 2.0, 5: 9.0, 6: 4.0})
    p = Path((3, 4, 5))
    by_hand = sum(edge_latency(diamond.edge(e), f.edge_flows[e]) for e in p.edges)
    assert path_latency(p, f) == pytest.approx(by_hand, rel=1e-14)


def test_path_latency_missing_edge():
    net, _ = two_edge_path()
    f = FlowVector.from_edge_flows(net, {1: 1.0})
    with pytest.raises(KeyError):
        path_latency(Path((9,)), f)


def test_congestion_examples(twin):
    net, ps, _ = twin
    paths = ps.all_paths
    assert total_congestion(FlowVector.zero(net, paths)) == 0.0
    assert total_congestion(FlowVector.from_path_flows(net, paths, [5, 5])) == pytest.approx(100.9375)
    assert total_congestion(FlowVector.from_path_flows(net, paths, [10, 0])) == pytest.approx(115.0)


def test_beckmann_examples(twin):
    net, ps, _ = twin
    paths = ps.all_paths
    single = Network.from_edges([E])
    assert beckmann_potential(FlowVector.zero(single)) == 0.0
    assert beckmann_potential(FlowVector.from_edge_flows(single, {1: 10.0})) == pytest.approx(103.0)
    split = beckmann_potential(FlowVector.from_path_flows(net, paths, [5, 5]))
    corner = beckmann_potential(FlowVector.from_path_flows(net, paths, [10, 0]))
    assert split == pytest.approx(100.1875)
    assert corner == pytest.approx(103.0)
    assert split < corner


@st.composite
def flows_on_sioux_falls(draw, network, paths):
    vals = draw(st.lists(st.floats(0, 5000), min_size=len(paths), max_size=len(paths)))
    return FlowVector.from_path_flows(network, paths, vals)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_path_edge_duality(sioux_falls, data):
    comms = [Commodity(1, 20, 1.0), Commodity(13, 2, 1.0), Commodity(7, 18, 1.0)]
    ps = build_path_set(sioux_falls, comms, k=5)
    f = data.draw(flows_on_sioux_falls(sioux_falls, ps.all_paths))
    a, b = path_congestion(f), edge_congestion(f)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)
    assert total_congestion(f) == pytest.approx(b, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 8000.0), min_size=76, max_size=76))
def test_beckmann_gradient_is_latency(sioux_falls, loads):
    h = 1e-4
    base = dict(zip(sioux_falls.edge_ids, loads))
    for eid in (1, 17, 40, 76):
        up = {**base, eid: base[eid] + h}
        lo = {**base, eid: max(base[eid] - h, 0.0)}
        span = up[eid] - lo[eid]
        grad = (
            beckmann_potential(FlowVector.from_edge_flows(sioux_falls, up))
            - beckmann_potential(FlowVector.from_edge_flows(sioux_falls, lo))
        ) / span
        mid = edge_latency(sioux_falls.edge(eid), 0.5 * (up[eid] + lo[eid]))
        assert grad == pytest.approx(mid, rel=1e-4)


def test_flowvector_rejects_negative(twin):
    net, ps, _ = twin
    with pytest.raises(FlowDomainError):
        FlowVector.from_path_flows(net, ps.all_paths, [-1.0, 2.0])


def test_incidence_consistency(sioux_falls):
    ps = build_path_set(sioux_falls, [Commodity(3, 22, 1.0)], k=4)
    x = np.array([1.0, 2.0, 3.0, 4.0])
    f = FlowVector.from_path_flows(sioux_falls, ps.all_paths, x)
    expect = {}
    for p, v in zip(ps.all_paths, x):
        for e in p.edges:
            expect[e] = expect.get(e, 0.0) + v
    for eid, v in f.edge_flows.items():
        assert v == pytest.approx(expect.get(eid, 0.0))
