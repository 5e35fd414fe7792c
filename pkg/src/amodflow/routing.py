"""Congestion-aware shortest-time routing: BPR link delays and A* search."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Mapping, Optional

EdgeKey = tuple[str, str]


class NoRouteError(Exception):
    pass


@dataclass(frozen=True)
class BprParams:
    alpha: float = 0.15
    beta: float = 4.0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")


def bpr_delay(t_free: float, flow: float, capacity: float, params: BprParams = BprParams()) -> float:
    """``t_free * (1 + alpha * (flow / capacity) ** beta)``."""
    if not capacity > 0:
        raise ValueError("capacity must be positive")
    if flow <= 0:
        return t_free
    return t_free * (1.0 + params.alpha * (flow / capacity) ** params.beta)


def free_flow_times_to(network, dest: str) -> dict[str, float]:
    """Free-flow shortest time from every node to ``dest`` (reverse Dijkstra)."""
    dist = {dest: 0.0}
    heap = [(0.0, dest)]
    done = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        for e in network.in_edges(v):
            nd = d + e.free_flow_time
            if nd < dist.get(e.u, math.inf):
                dist[e.u] = nd
                heapq.heappush(heap, (nd, e.u))
    return dist


def free_flow_times_from(network, origin: str) -> dict[str, float]:
    dist = {origin: 0.0}
    heap = [(0.0, origin)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for e in network.out_edges(u):
            nd = d + e.free_flow_time
            if nd < dist.get(e.v, math.inf):
                dist[e.v] = nd
                heapq.heappush(heap, (nd, e.v))
    return dist


class Heuristic:
    """Admissible lower bounds on remaining time to a destination.

    ``kind`` is ``"free_flow"`` (exact free-flow distance, computed by a
    reverse search per destination and cached), ``"euclidean"`` (straight
    line distance over the fastest edge speed in the network) or ``"zero"``.
    BPR delays never undercut free-flow times, so all three are consistent.
    """

    def __init__(self, network, kind: str = "free_flow"):
        if kind not in ("free_flow", "euclidean", "zero"):
            raise ValueError(f"unknown heuristic {kind!r}")
        if kind == "euclidean" and not network.has_coords:
            kind = "zero"
        self.network = network
        self.kind = kind
        self._cache: dict[str, dict[str, float]] = {}
        self._vmax = None
        if kind == "euclidean":
            vmax = 0.0
            for e in network.edges:
                length = network.edge_length(e)
                if length is None or length == 0:
                    continue
                if e.free_flow_time <= 0:
                    vmax = math.inf
                    break
                vmax = max(vmax, length / e.free_flow_time)
            self._vmax = vmax
            if not math.isfinite(vmax) or vmax == 0:
                self.kind = "zero"

    def to(self, dest: str):
        if self.kind == "zero":
            return lambda n: 0.0
        if self.kind == "free_flow":
            table = self._cache.get(dest)
            if table is None:
                table = self._cache[dest] = free_flow_times_to(self.network, dest)
            return lambda n: table.get(n, math.inf)
        xd, yd = self.network.coords[dest]
        coords, vmax = self.network.coords, self._vmax
        return lambda n: math.hypot(coords[n][0] - xd, coords[n][1] - yd) / vmax


def edge_delays(network, loads: Mapping[EdgeKey, float], params: BprParams = BprParams()) -> dict[EdgeKey, float]:
    return {
        e.key: bpr_delay(e.free_flow_time, loads.get(e.key, 0.0), e.capacity, params)
        for e in network.edges
    }


def astar_route(
    network,
    loads: Mapping[EdgeKey, float],
    params: BprParams,
    origin: str,
    dest: str,
    heuristic: Optional[Heuristic] = None,
    delays: Optional[Mapping[EdgeKey, float]] = None,
) -> tuple[list[str], float]:
    """Minimum-time path under BPR delays at frozen ``loads``.

    Among equal-time paths the lexicographically smallest node sequence is
    returned (exact for strictly positive edge times). ``delays`` may carry
    precomputed per-edge times to skip the BPR evaluation.
    """
    idx = network.index["node"]
    if origin not in idx or dest not in idx:
        raise ValueError("origin or destination not in network")
    if origin == dest:
        return [origin], 0.0
    h = (heuristic or Heuristic(network)).to(dest)
    h0 = h(origin)
    if not math.isfinite(h0):
        raise NoRouteError(f"no route from {origin} to {dest}")

    def delay(e) -> float:
        if delays is not None:
            return delays[e.key]
        return bpr_delay(e.free_flow_time, loads.get(e.key, 0.0), e.capacity, params)

    heap = [(h0, 0.0, (origin,))]
    closed = set()
    while heap:
        f, g, path = heapq.heappop(heap)
        u = path[-1]
        if u in closed:
            continue
        if u == dest:
            return list(path), g
        closed.add(u)
        for e in network.out_edges(u):
            if e.v in closed:
                continue
            hv = h(e.v)
            if not math.isfinite(hv):
                continue
            ng = g + delay(e)
            heapq.heappush(heap, (ng + hv, ng, path + (e.v,)))
    raise NoRouteError(f"no route from {origin} to {dest}")


def path_time(network, path, loads: Mapping[EdgeKey, float], params: BprParams = BprParams()) -> float:
    total = 0.0
    for u, v in zip(path, path[1:]):
        e = network.edge(u, v)
        total += bpr_delay(e.free_flow_time, loads.get(e.key, 0.0), e.capacity, params)
    return total
