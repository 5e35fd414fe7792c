"""Instance generators and independent oracles shared by the test modules."""

from __future__ import annotations

import itertools
import math

import networkx as nx
import numpy as np

from amodflow.netgraph import Edge, Request, RequestSet, RoadNetwork


def two_node(cap_ab=2.0, cap_ba=2.0, t=1.0) -> RoadNetwork:
    return RoadNetwork(
        ["a", "b"],
        [Edge("a", "b", cap_ab, t), Edge("b", "a", cap_ba, t)],
        {"a": (0.0, 0.0), "b": (100.0, 0.0)},
    )


def symmetric_network(rng: np.random.Generator, n: int) -> RoadNetwork:
    """Random capacity-symmetric digraph with integral capacities.

    A random spanning tree plus a few chords, each present in both
    directions with equal capacity, then several random directed cycles
    that add the same integral amount along every cycle edge. Each step
    keeps in-capacity equal to out-capacity at every node.
    """
    cap: dict[tuple[int, int], int] = {}

    def bump(u, v, c):
        cap[(u, v)] = cap.get((u, v), 0) + c

    for i in range(1, n):
        j = int(rng.integers(0, i))
        c = int(rng.integers(1, 5))
        bump(i, j, c)
        bump(j, i, c)
    for _ in range(int(rng.integers(0, n))):
        i, j = (int(x) for x in rng.choice(n, 2, replace=False))
        c = int(rng.integers(1, 5))
        bump(i, j, c)
        bump(j, i, c)
    for _ in range(int(rng.integers(1, 4))):
        k = int(rng.integers(3, min(n, 6) + 1))
        cyc = [int(x) for x in rng.choice(n, k, replace=False)]
        c = int(rng.integers(1, 4))
        for u, v in zip(cyc, cyc[1:] + cyc[:1]):
            bump(u, v, c)
    nodes = [f"n{i}" for i in range(n)]
    edges = [Edge(nodes[u], nodes[v], float(c), float(rng.integers(1, 10))) for (u, v), c in sorted(cap.items())]
    coords = {nodes[i]: (float(rng.uniform(0, 1000)), float(rng.uniform(0, 1000))) for i in range(n)}
    return RoadNetwork(nodes, edges, coords)


def _random_path(rng, net: RoadNetwork, o: str, d: str, residual) -> list[str] | None:
    """Randomised depth-first search for a simple path over edges with room."""
    stack = [(o, [o])]
    seen = set()
    while stack:
        u, path = stack.pop()
        if u == d:
            return path
        if u in seen:
            continue
        seen.add(u)
        outs = [e for e in net.out_edges(u) if residual[e.key] > 1e-12 and e.v not in path]
        for idx in rng.permutation(len(outs)):
            e = outs[int(idx)]
            stack.append((e.v, path + [e.v]))
    return None


def random_customer_flows(rng, net: RoadNetwork, n_requests: int, integral: bool = False):
    """Route random demands along random paths below capacity.

    Returns ``(RequestSet, customer_flows)`` where every request's flow is a
    single path carrying its whole rate.
    """
    residual = {e.key: e.capacity for e in net.edges}
    reqs, flows = [], []
    tries = 0
    while len(reqs) < n_requests and tries < 50 * n_requests:
        tries += 1
        o, d = (net.nodes[int(i)] for i in rng.choice(len(net.nodes), 2, replace=False))
        path = _random_path(rng, net, o, d, residual)
        if path is None:
            continue
        room = min(residual[k] for k in zip(path, path[1:]))
        if integral:
            rate = float(int(rng.integers(1, int(room) + 1))) if room >= 1 else 0.0
        else:
            rate = float(rng.uniform(0.2, 1.0)) * room
        if rate <= 0:
            continue
        for k in zip(path, path[1:]):
            residual[k] -= rate
        reqs.append(Request(o, d, rate))
        flows.append({k: rate for k in zip(path, path[1:])})
    return RequestSet(reqs), flows


def to_nx(net: RoadNetwork, weight=None) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(net.nodes)
    for e in net.edges:
        g.add_edge(e.u, e.v, capacity=e.capacity, weight=(weight(e) if weight else e.free_flow_time))
    return g


def max_flow_value(net: RoadNetwork, s: str, t: str) -> float:
    return nx.maximum_flow_value(to_nx(net), s, t)


def brute_force_best_path(net: RoadNetwork, o: str, d: str, delay) -> float:
    """Minimum total delay over every simple path (exhaustive)."""
    g = to_nx(net)
    best = math.inf
    for path in nx.all_simple_paths(g, o, d):
        best = min(best, sum(delay[(u, v)] for u, v in zip(path, path[1:])))
    return best


def brute_force_cut_check(net: RoadNetwork, reqs: RequestSet) -> bool:
    """Both cut conditions over every nonempty proper subset, plain loops."""
    nodes = net.nodes
    for k in range(1, len(nodes)):
        for s in itertools.combinations(nodes, k):
            s = set(s)
            c_out = sum(e.capacity for e in net.edges if e.u in s and e.v not in s)
            c_in = sum(e.capacity for e in net.edges if e.v in s and e.u not in s)
            dem = sum(r.rate for r in reqs if r.origin in s and r.dest not in s)
            if dem > c_out + 1e-9 or dem > c_in + 1e-9:
                return False
    return True
