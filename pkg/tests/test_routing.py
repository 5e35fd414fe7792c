import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amodflow import netgraph as ng
from amodflow import routing
from amodflow.netgraph import Edge, RoadNetwork
from amodflow.routing import BprParams, Heuristic, NoRouteError, astar_route, bpr_delay

from helpers import brute_force_best_path


def test_bpr_point_values():
    assert bpr_delay(10.0, 0.0, 2.0) == 10.0
    assert bpr_delay(10.0, 2.0, 2.0) == 10.0 * 1.15
    assert bpr_delay(4.0, 4.0, 2.0) == pytest.approx(4.0 * (1 + 0.15 * 16))


def test_bpr_rejects_bad_input():
    with pytest.raises(ValueError):
        bpr_delay(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        BprParams(alpha=-1)
    with pytest.raises(ValueError):
        BprParams(beta=0.5)


@given(t=st.floats(0.1, 100), c=st.floats(0.1, 10), f1=st.floats(0, 20), f2=st.floats(0, 20))
def test_bpr_monotone_in_flow(t, c, f1, f2):
    lo, hi = sorted((f1, f2))
    assert bpr_delay(t, lo, c) <= bpr_delay(t, hi, c)
    assert bpr_delay(t, lo, c) >= t


def test_parallel_routes_pick_the_less_loaded():
    net = RoadNetwork(
        ["o", "x", "y", "d"],
        [Edge("o", "x", 1, 10), Edge("x", "d", 1, 10), Edge("o", "y", 1, 10), Edge("y", "d", 1, 10)],
    )
    path, cost = astar_route(net, {}, BprParams(), "o", "d")
    assert path == ["o", "x", "d"] and cost == 20.0  # lexicographic tie-break
    path, cost = astar_route(net, {("o", "x"): 2.0}, BprParams(), "o", "d")
    assert path == ["o", "y", "d"] and cost == 20.0


def test_no_route_and_trivial_route():
    net = RoadNetwork(["a", "b"], [Edge("a", "b", 1, 1)])
    with pytest.raises(NoRouteError):
        astar_route(net, {}, BprParams(), "b", "a")
    assert astar_route(net, {}, BprParams(), "a", "a") == (["a"], 0.0)
    with pytest.raises(ValueError):
        astar_route(net, {}, BprParams(), "a", "zz")


def test_free_flow_tables():
    net = ng.grid_network(2, 3, spacing=100, speed=10)
    to = routing.free_flow_times_to(net, "0,0")
    fr = routing.free_flow_times_from(net, "0,0")
    assert to["1,2"] == pytest.approx(30.0)
    assert fr == pytest.approx(to)


def _random_graph(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    nodes = [f"v{i}" for i in range(n)]
    coords = {v: (float(rng.uniform(0, 100)), float(rng.uniform(0, 100))) for v in nodes}
    edges = []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < 0.4:
                d = math.dist(coords[nodes[i]], coords[nodes[j]])
                t = d / 10.0 + float(rng.uniform(0.1, 5.0))
                edges.append(Edge(nodes[i], nodes[j], float(rng.uniform(0.5, 3)), t))
    net = RoadNetwork(nodes, edges, coords)
    loads = {e.key: float(rng.uniform(0, 4)) for e in edges if rng.random() < 0.6}
    return net, loads


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), kind=st.sampled_from(["free_flow", "euclidean", "zero"]))
def test_astar_matches_exhaustive_search(seed, kind):
    net, loads = _random_graph(seed)
    delay = routing.edge_delays(net, loads)
    o, d = net.nodes[0], net.nodes[-1]
    best = brute_force_best_path(net, o, d, delay)
    h = Heuristic(net, kind)
    if math.isinf(best):
        with pytest.raises(NoRouteError):
            astar_route(net, loads, BprParams(), o, d, h)
        return
    path, cost = astar_route(net, loads, BprParams(), o, d, h)
    assert cost == pytest.approx(best, rel=1e-12)
    assert routing.path_time(net, path, loads) == pytest.approx(cost, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_more_load_never_shortens_the_best_route(seed):
    net, loads = _random_graph(seed)
    o, d = net.nodes[0], net.nodes[-1]
    try:
        _, before = astar_route(net, loads, BprParams(), o, d)
    except NoRouteError:
        return
    heavier = {e.key: loads.get(e.key, 0.0) + 1.0 for e in net.edges}
    _, after = astar_route(net, heavier, BprParams(), o, d)
    assert after >= before - 1e-12


def test_heuristics_are_admissible():
    net, _ = _random_graph(5)
    for kind in ("free_flow", "euclidean"):
        h = Heuristic(net, kind)
        exact = routing.free_flow_times_to(net, net.nodes[-1])
        lb = h.to(net.nodes[-1])
        for n, t in exact.items():
            assert lb(n) <= t + 1e-9
