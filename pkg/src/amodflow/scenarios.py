"""Synthetic networks and demand used by the experiment scripts and tests."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .netgraph import Request, RequestSet, RoadNetwork, grid_network
from .simulator import Trip


def _skew_weights(network: RoadNetwork, skew: float) -> tuple[np.ndarray, np.ndarray]:
    """Origin weights favour low x+y, destination weights high x+y."""
    if not network.has_coords:
        raise ValueError("synthetic demand needs node coordinates")
    s = np.array([sum(network.coords[n]) for n in network.nodes], dtype=float)
    span = s.max() - s.min()
    s = (s - s.min()) / span if span > 0 else np.zeros_like(s)
    w_o, w_d = np.exp(-skew * s), np.exp(skew * s)
    return w_o / w_o.sum(), w_d / w_d.sum()


def _draw_pair(rng, n: int, w_o, w_d) -> tuple[int, int]:
    o = int(rng.choice(n, p=w_o))
    d = o
    while d == o:
        d = int(rng.choice(n, p=w_d))
    return o, d


def imbalanced_trips(
    network: RoadNetwork,
    n_trips: int,
    horizon: float,
    seed: int = 0,
    skew: float = 3.0,
) -> list[Trip]:
    """Uniform arrivals over ``horizon`` seconds; origins lean south-west,
    destinations north-east, with strength ``skew``."""
    rng = np.random.default_rng(seed)
    w_o, w_d = _skew_weights(network, skew)
    nodes = network.nodes
    times = np.sort(rng.uniform(0.0, horizon, size=n_trips))
    trips = []
    for t in times:
        o, d = _draw_pair(rng, len(nodes), w_o, w_d)
        trips.append(Trip(float(t), nodes[o], nodes[d]))
    return trips


def imbalanced_requests(
    network: RoadNetwork,
    n_requests: int,
    seed: int = 0,
    skew: float = 2.0,
    rate_range: tuple[float, float] = (0.5, 1.5),
) -> RequestSet:
    """Distinct origin-destination pairs with the same directional lean as
    :func:`imbalanced_trips`, rates drawn uniformly from ``rate_range``."""
    rng = np.random.default_rng(seed)
    w_o, w_d = _skew_weights(network, skew)
    nodes = network.nodes
    seen: set[tuple[int, int]] = set()
    reqs = []
    while len(reqs) < n_requests:
        pair = _draw_pair(rng, len(nodes), w_o, w_d)
        if pair in seen:
            continue
        seen.add(pair)
        reqs.append(Request(nodes[pair[0]], nodes[pair[1]], float(rng.uniform(*rate_range))))
    return RequestSet(reqs)


def downtown_grid(
    rows: int = 10,
    cols: int = 10,
    spacing: float = 200.0,
    speed: float = 11.0,
    capacity: float = 0.3,
    block: Optional[tuple[int, int]] = (3, 6),
    factor: float = 0.25,
) -> RoadNetwork:
    """Symmetric grid whose central block of streets carries only
    ``factor`` of the normal capacity (in both directions).

    ``block=(lo, hi)`` selects nodes with row and column in ``[lo, hi]``;
    every edge touching such a node is derated.
    """
    net = grid_network(rows, cols, spacing=spacing, capacity=capacity, speed=speed)
    if block is None or factor == 1.0:
        return net
    lo, hi = block

    def inside(n: str) -> bool:
        r, c = map(int, n.split(","))
        return lo <= r <= hi and lo <= c <= hi

    return net.with_capacities({e.key: e.capacity * factor for e in net.edges if inside(e.u) or inside(e.v)})
