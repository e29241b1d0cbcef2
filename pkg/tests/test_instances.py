import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketeq import INF, MarketProblem, NetworkProblem, Point, WirelessProblem
from marketeq import instances
from marketeq.instances import (BENCHMARK_DISUTILITIES, GenerationError, enumerate_paths,
                                generate_network, generate_wireless)
from marketeq.objective import validate_for_solver

from models import t1, w1


def test_network_generator_is_deterministic():
    a = instances.dumps(generate_network(7))
    b = instances.dumps(generate_network(7))
    assert a == b
    assert a != instances.dumps(generate_network(8))


def test_wireless_generator_is_deterministic():
    assert instances.dumps(generate_wireless(3)) == instances.dumps(generate_wireless(3))


def test_benchmark_shape():
    prob = generate_network(1, benchmark_buyers=True)
    net = prob.network
    assert len(net.nodes) == 20 and len(net.arcs) == 114
    assert len(prob.od_pairs) == 10
    for od in prob.od_pairs:
        assert 1 <= len(od.paths) <= 50
        assert len(set(od.paths)) == len(od.paths)
        coeffs = [(b.disutility.params["c0"], -b.disutility.params["c1"]) for b in od.buyers]
        assert coeffs == list(BENCHMARK_DISUTILITIES)
        assert [b.cap for b in od.buyers] == [60.0, pytest.approx(28 / 0.3)]
    # no duplicate arcs, no self loops, pairs are distinct
    assert len(set(net.arcs)) == len(net.arcs)
    assert all(u != v for u, v in net.arcs)
    assert len({(od.origin, od.destination) for od in prob.od_pairs}) == 10


def test_unit_arcs_option():
    prob = generate_network(2, nodes=6, arcs=14, od_pairs=2, paths_per_pair=4, unit_arcs=True)
    assert all(c.params == {"c0": 1.0, "c1": 1.0} for c in prob.network.costs)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.booleans())
def test_generated_instances_are_solver_ready(seed, capped):
    net = generate_network(seed, nodes=8, arcs=20, od_pairs=3, paths_per_pair=6)
    validate_for_solver(net)
    assert np.all(np.isfinite(net.caps))
    wl = generate_wireless(seed, capped=capped)
    validate_for_solver(wl, penalized=capped)
    assert bool(np.all(np.isfinite(wl.provider_caps))) is capped


def test_generator_rejects_bad_sizes():
    with pytest.raises(GenerationError):
        generate_network(0, nodes=5, arcs=3)
    with pytest.raises(GenerationError):
        generate_network(0, nodes=3, arcs=7)
    with pytest.raises(GenerationError):
        generate_network(0, nodes=3, arcs=4, od_pairs=7)
    with pytest.raises(ValueError, match="buyers_per_pair"):
        generate_network(0, buyers_per_pair=3, benchmark_buyers=True)


def test_enumerate_paths_breadth_first():
    arcs = [("o", "a"), ("a", "d"), ("o", "d"), ("a", "b"), ("b", "d"), ("d", "o")]
    paths = enumerate_paths(arcs, "o", "d")
    assert paths == [(2,), (0, 1), (0, 3, 4)]
    assert enumerate_paths(arcs, "o", "d", limit=2) == [(2,), (0, 1)]
    assert enumerate_paths(arcs, "d", "b") == [(5, 0, 3)]
    assert enumerate_paths(arcs, "b", "zzz") == []


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_enumerated_paths_are_simple_walks(seed):
    prob = generate_network(seed, nodes=7, arcs=18, od_pairs=2, paths_per_pair=10)
    arcs = prob.network.arcs
    for od in prob.od_pairs:
        for p in od.paths:
            nodes = [arcs[p[0]][0]] + [arcs[a][1] for a in p]
            assert nodes[0] == od.origin and nodes[-1] == od.destination
            assert len(set(nodes)) == len(nodes)
            assert all(arcs[a][1] == arcs[b][0] for a, b in zip(p, p[1:]))


@pytest.mark.parametrize("make", [t1, w1, lambda: w1(alpha1=1.0),
                                  lambda: generate_network(4, nodes=6, arcs=14, od_pairs=2,
                                                           paths_per_pair=3),
                                  lambda: generate_wireless(4, capped=True)])
def test_round_trip(make, tmp_path):
    prob = make()
    text = instances.dumps(prob, generator={"seed": 4})
    back = instances.loads(text)
    assert type(back) is type(prob)
    assert instances.dumps(back, generator={"seed": 4}) == text
    assert json.loads(text)["generator"] == {"seed": 4}
    instances.save(prob, tmp_path / "p.json")
    assert instances.dumps(instances.load(tmp_path / "p.json")) == instances.dumps(prob)


def test_infinite_caps_serialize_as_null():
    doc = instances.to_dict(w1())
    assert all(p["cap"] is None for p in doc["providers"])
    assert instances.from_dict(doc).providers[0].cap == INF


def test_market_documents():
    doc = {"kind": "market", "commodities": [{
        "traders": [{"price": {"form": "affine", "c0": 1, "c1": 1}}],
        "buyers": [{"price": {"form": "affine", "c0": 5, "c1": -1}, "upper": 10}],
    }]}
    prob = instances.from_dict(doc)
    assert isinstance(prob, MarketProblem)
    g, h = prob.prices(Point([2.0], [2.0]))
    assert g.tolist() == [3.0] and h.tolist() == [3.0]


def test_unserializable_inputs():
    with pytest.raises(ValueError, match="unknown instance kind"):
        instances.from_dict({"kind": "graph"})
    with pytest.raises(TypeError):
        instances.to_dict(object())
    cb = WirelessProblem(w1().providers, w1().users, lambda x: x)
    with pytest.raises(ValueError, match="callable"):
        instances.to_dict(cb)
    assert isinstance(instances.loads(instances.dumps(t1())), NetworkProblem)
