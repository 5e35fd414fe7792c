"""Rebalancing: the constructive augmenting-path algorithm for feasible
rebalancing flows, the real-time region-level integer program, flow
decomposition into vehicle paths, and region bookkeeping.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import lp as lpmod
from .netgraph import Cut, RequestSet, RoadNetwork, cut_capacities
from .crrp import (
    EdgeKey,
    FlowAssignment,
    ShadowMap,
    _drop_shadow,
    _lift_customer_flows,
    shadow_transform,
    verify_flows,
)

log = logging.getLogger(__name__)

SATURATION_TOL = 1e-9


class RebalanceError(Exception):
    pass


# ---------------------------------------------------------------------------
# partial rebalancing flows


@dataclass
class PartialRebalancingFlow:
    flow: dict[EdgeKey, float] = field(default_factory=dict)
    defective_origins: list[str] = field(default_factory=list)
    defective_destinations: list[str] = field(default_factory=list)

    @property
    def is_feasible(self) -> bool:
        return not self.defective_origins and not self.defective_destinations


def _node_balance(network: RoadNetwork, requests: RequestSet, flow: Mapping[EdgeKey, float]) -> dict[str, float]:
    """``in_R + destination rate - out_R - origin rate`` per node."""
    bal = dict.fromkeys(network.nodes, 0.0)
    for (u, v), x in flow.items():
        bal[v] += x
        bal[u] -= x
    for r in requests:
        bal[r.dest] += r.rate
        bal[r.origin] -= r.rate
    return bal


def _residuals(network: RoadNetwork, customer_flows, flow: Mapping[EdgeKey, float]) -> dict[EdgeKey, float]:
    load: dict[EdgeKey, float] = {}
    for fm in customer_flows:
        for k, x in fm.items():
            load[k] = load.get(k, 0.0) + x
    return {e.key: e.capacity - load.get(e.key, 0.0) - flow.get(e.key, 0.0) for e in network.edges}


def check_partial_flow(
    network: RoadNetwork,
    requests: RequestSet,
    customer_flows,
    flow: Mapping[EdgeKey, float],
    tol: float = SATURATION_TOL,
) -> list[str]:
    """Violations of the four partial-rebalancing-flow properties."""
    problems = []
    origins = {r.origin for r in requests}
    dests = {r.dest for r in requests}
    scale = max(1.0, requests.total_rate)
    for k, x in flow.items():
        if x < -tol:
            problems.append(f"negative flow on {k}")
    for n, b in _node_balance(network, requests, flow).items():
        if n in origins and n in dests:
            problems.append(f"node {n} is both origin and destination (apply the shadow transform)")
        elif n in origins:
            if b > tol * scale:
                problems.append(f"origin {n} receives more than it sends")
        elif n in dests:
            if b < -tol * scale:
                problems.append(f"destination {n} sends more than it receives")
        elif abs(b) > tol * scale:
            problems.append(f"conservation violated at {n}")
    for k, res in _residuals(network, customer_flows, flow).items():
        if res < -tol * max(1.0, network.edge(*k).capacity):
            problems.append(f"capacity exceeded on {k}")
    return problems


def find_defective(
    network: RoadNetwork,
    requests: RequestSet,
    customer_flows,
    partial: Union[PartialRebalancingFlow, Mapping[EdgeKey, float]],
    tol: float = SATURATION_TOL,
) -> tuple[list[str], list[str]]:
    """Defective origins and destinations of a partial rebalancing flow, in
    node order."""
    flow = partial.flow if isinstance(partial, PartialRebalancingFlow) else partial
    problems = check_partial_flow(network, requests, customer_flows, flow, tol)
    if problems:
        raise RebalanceError("not a partial rebalancing flow: " + "; ".join(problems))
    origins = {r.origin for r in requests}
    dests = {r.dest for r in requests}
    scale = max(1.0, requests.total_rate)
    bal = _node_balance(network, requests, flow)
    d_or = [n for n in network.nodes if n in origins and bal[n] < -tol * scale]
    d_de = [n for n in network.nodes if n in dests and bal[n] > tol * scale]
    return d_or, d_de


@dataclass
class FeasibleRebalancing:
    flow: dict[EdgeKey, float]
    augmentations: int


@dataclass
class Blocked:
    """No unsaturated path joins the remaining defective nodes.

    ``saturated_cut`` has every defective destination on its S side and every
    defective origin outside; all of its S -> S-bar edges are saturated and
    ``c_in - c_out > 0``.
    """

    partial: PartialRebalancingFlow
    saturated_cut: Cut
    c_out: float
    c_in: float
    augmentations: int

    @property
    def imbalance(self) -> float:
        return self.c_in - self.c_out


def _bfs_path(network: RoadNetwork, start: str, targets: set, residual: Mapping[EdgeKey, float], tol: float):
    """Breadth-first search over unsaturated edges; neighbours are visited
    in edge order so the result is deterministic."""
    parent = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u in targets and u != start:
            path = [u]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        for e in network.out_edges(u):
            if e.v not in parent and residual[e.key] > tol * max(1.0, e.capacity):
                parent[e.v] = u
                queue.append(e.v)
    return None


def _saturated_cut(network: RoadNetwork, origins: Sequence[str], residual, tol: float) -> frozenset:
    """S = nodes that cannot reach a defective origin over unsaturated edges."""
    reach = set(origins)
    queue = deque(origins)
    while queue:
        v = queue.popleft()
        for e in network.in_edges(v):
            if e.u not in reach and residual[e.key] > tol * max(1.0, e.capacity):
                reach.add(e.u)
                queue.append(e.u)
    return frozenset(n for n in network.nodes if n not in reach)


def construct_rebalancing_flow(
    network: RoadNetwork,
    requests: RequestSet,
    customer_flows: Sequence[Mapping[EdgeKey, float]],
    tol: float = SATURATION_TOL,
    check_invariants: bool = False,
) -> Union[FeasibleRebalancing, Blocked]:
    """Build a feasible rebalancing flow by augmenting from defective
    destinations to defective origins along unsaturated paths.

    Starting from zero flow, repeatedly take the first defective destination
    (node order) that reaches a defective origin by breadth-first search over
    unsaturated edges, and push the largest amount that keeps every edge
    within capacity and neither endpoint over-corrected. Stops when no
    defective node is left (success) or no such path exists (``Blocked``).
    Integral inputs stay integral.

    ``check_invariants`` re-verifies the partial-flow properties, and that
    repaired nodes stay repaired, after every augmentation.
    """
    cflows = [dict(fm) for fm in customer_flows]
    report = verify_flows(network, requests, FlowAssignment(cflows, {}), tolerance=1e-7)
    if not report.customer_feasible or report.unknown_edges:
        raise RebalanceError(f"customer flows are not feasible: {report.max_violation}")

    shadow: ShadowMap = shadow_transform(network, requests)
    net, reqs = shadow.network, shadow.requests
    cflows = _lift_customer_flows(shadow, cflows)

    flow: dict[EdgeKey, float] = {}
    residual = _residuals(net, cflows, flow)
    d_or, d_de = find_defective(net, reqs, cflows, flow, tol)
    repaired: set[str] = set()
    steps = 0
    while d_or and d_de:
        bal = _node_balance(net, reqs, flow)
        origins = set(d_or)
        path = None
        for t in d_de:
            path = _bfs_path(net, t, origins, residual, tol)
            if path is not None:
                break
        if path is None:
            break
        keys = list(zip(path, path[1:]))
        amount = min(min(residual[k] for k in keys), bal[path[0]], -bal[path[-1]])
        for k in keys:
            flow[k] = flow.get(k, 0.0) + amount
            residual[k] -= amount
            if abs(residual[k]) <= tol * max(1.0, net.edge(*k).capacity):
                residual[k] = 0.0
        steps += 1
        new_or, new_de = find_defective(net, reqs, cflows, flow, tol)
        repaired |= (set(d_or) - set(new_or)) | (set(d_de) - set(new_de))
        if check_invariants:
            if repaired & (set(new_or) | set(new_de)):
                raise RebalanceError("a repaired node became defective again")
            problems = check_partial_flow(net, reqs, cflows, flow, tol)
            if problems:
                raise RebalanceError("; ".join(problems))
        d_or, d_de = new_or, new_de

    if bool(d_or) != bool(d_de):
        raise RebalanceError("defective origins and destinations must co-exist")

    if not d_or:
        return FeasibleRebalancing(_drop_shadow(shadow, flow), steps)

    s_side = _saturated_cut(net, d_or, residual, tol)
    # shadow edges never saturate, so a node and its shadow share a side
    orig_s = frozenset(n for n in s_side if n not in shadow.shadow_nodes)
    c_out, c_in = cut_capacities(network, orig_s)
    partial = PartialRebalancingFlow(
        _drop_shadow(shadow, flow),
        list(d_or),
        [_unshadow(shadow, n) for n in d_de],
    )
    return Blocked(partial, Cut(orig_s), c_out, c_in, steps)


def _unshadow(shadow: ShadowMap, node: str) -> str:
    for n, s in shadow.shadow_of.items():
        if s == node:
            return n
    return node


# ---------------------------------------------------------------------------
# real-time region-level rebalancing


@dataclass
class RebalanceInstance:
    """Region supplies for one rebalancing round.

    ``anchors[i]`` is the road node representing region ``region_ids[i]``.
    ``residual`` maps each edge to the integral number of extra vehicles it
    can take before reaching its congestion threshold.
    """

    region_ids: list
    anchors: list[str]
    excess: list[int]
    desired: list[int]
    residual: dict[EdgeKey, int]
    slack_cost: Optional[float] = None

    def __post_init__(self) -> None:
        n = len(self.region_ids)
        if not (len(self.anchors) == len(self.excess) == len(self.desired) == n):
            raise ValueError("per-region lists must have equal length")
        for k, c in self.residual.items():
            if c < 0 or int(c) != c:
                raise ValueError(f"residual capacity on {k} must be a nonnegative integer")
        for v in list(self.excess) + list(self.desired):
            if int(v) != v:
                raise ValueError("excess and desired counts must be integers")

    @property
    def origins(self) -> list:
        return [r for r, e, d in zip(self.region_ids, self.excess, self.desired) if e > d]

    @property
    def destinations(self) -> list:
        return [r for r, e, d in zip(self.region_ids, self.excess, self.desired) if e < d]

    @property
    def total_imbalance(self) -> int:
        return int(sum(abs(e - d) for e, d in zip(self.excess, self.desired)))


@dataclass
class RebalanceResult:
    flow: dict[EdgeKey, int]
    origin_slack: dict  # region -> ds
    dest_slack: dict  # region -> dt
    objective: float
    max_fractionality: float

    @property
    def total_slack(self) -> int:
        return int(sum(self.origin_slack.values()) + sum(self.dest_slack.values()))


def default_realtime_slack_cost(instance: RebalanceInstance, times: Mapping[EdgeKey, float]) -> float:
    return 1.0 + sum(times.values()) * instance.total_imbalance


def solve_realtime_rebalance(
    instance: RebalanceInstance,
    network: RoadNetwork,
    free_flow_times: Optional[Mapping[EdgeKey, float]] = None,
    integrality_tol: float = 1e-7,
    lp_method: str = "dense",
) -> RebalanceResult:
    """Minimum-time integral rebalancing flow between surplus and deficit
    regions under residual edge capacities.

    Each surplus region may leave ``ds`` vehicles unsent and each deficit
    region ``dt`` slots unfilled at cost ``C`` apiece, so the program is always
    feasible and slack is used only for units that cannot be routed. The
    constraint matrix is a network matrix (totally unimodular), so the
    simplex vertex of the relaxation is integral; that is asserted before
    rounding.
    """
    times = {e.key: e.free_flow_time for e in network.edges}
    if free_flow_times is not None:
        times.update(free_flow_times)
    C = instance.slack_cost if instance.slack_cost is not None else default_realtime_slack_cost(instance, times)

    prog = lpmod.LinearProgram()
    fvar = {}
    for e in network.edges:
        cap = instance.residual.get(e.key, 0)
        fvar[e.key] = prog.add_variable(times[e.key], 0.0, float(cap), name=f"f[{e.u}>{e.v}]")

    supply: dict[str, dict[int, float]] = {n: {} for n in network.nodes}
    rhs: dict[str, float] = dict.fromkeys(network.nodes, 0.0)
    ds, dt = {}, {}
    for rid, node, e, d in zip(instance.region_ids, instance.anchors, instance.excess, instance.desired):
        if node not in supply:
            raise ValueError(f"anchor {node!r} not in network")
        if e > d:
            j = prog.add_variable(C, 0.0, float(e - d), name=f"ds[{rid}]")
            ds[rid] = j
            # out - in = (e - d) - ds
            rhs[node] += e - d
            supply[node][j] = supply[node].get(j, 0.0) + 1.0
        elif e < d:
            j = prog.add_variable(C, 0.0, float(d - e), name=f"dt[{rid}]")
            dt[rid] = j
            # out - in = -(d - e) + dt
            rhs[node] -= d - e
            supply[node][j] = supply[node].get(j, 0.0) - 1.0

    for n in network.nodes:
        coeffs = dict(supply[n])
        for e in network.out_edges(n):
            coeffs[fvar[e.key]] = coeffs.get(fvar[e.key], 0.0) + 1.0
        for e in network.in_edges(n):
            coeffs[fvar[e.key]] = coeffs.get(fvar[e.key], 0.0) - 1.0
        if coeffs or rhs[n]:
            prog.add_constraint(coeffs, "==", rhs[n], name=f"bal[{n}]")

    sol = lpmod.solve_lp(prog, method=lp_method)
    if sol.status != lpmod.OPTIMAL:
        raise RebalanceError(f"rebalancing LP failed: {sol.status}")
    x = sol.x
    frac = float(np.max(np.abs(x - np.round(x)), initial=0.0))
    if frac > integrality_tol:
        raise RebalanceError(f"non-integral vertex (max fractional part {frac:.3g})")
    xi = np.round(x).astype(np.int64)
    flow = {k: int(xi[j]) for k, j in fvar.items() if xi[j] != 0}
    obj = float(sum(times[k] * v for k, v in flow.items())
                + C * (sum(int(xi[j]) for j in ds.values()) + sum(int(xi[j]) for j in dt.values())))
    return RebalanceResult(
        flow,
        {r: int(xi[j]) for r, j in ds.items()},
        {r: int(xi[j]) for r, j in dt.items()},
        obj,
        frac,
    )


# ---------------------------------------------------------------------------
# flow decomposition


@dataclass
class PathSet:
    paths: list[tuple[list, int]] = field(default_factory=list)
    cycles: list[tuple[list, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.paths) + len(self.cycles)

    def recompose(self) -> dict[tuple, int]:
        out: dict[tuple, int] = {}
        for seq, k in list(self.paths) + list(self.cycles):
            for e in zip(seq, seq[1:]):
                out[e] = out.get(e, 0) + k
        return out


def flow_decompose(flow: Mapping[tuple, int]) -> PathSet:
    """Split a nonnegative integral flow into source-to-sink paths and cycles.

    Paths run from nodes with net outflow to nodes with net inflow; what
    remains afterwards is a circulation, split into cycles. Cycles are
    listed closed (first node repeated at the end). Each extraction removes
    the bottleneck amount, so the pieces superpose back to ``flow`` exactly.
    """
    rem: dict[tuple, int] = {}
    for k, x in flow.items():
        if isinstance(x, float):
            if not x.is_integer():
                raise ValueError(f"non-integral flow {x} on {k}")
            x = int(x)
        if x < 0:
            raise ValueError(f"negative flow {x} on {k}")
        if k[0] == k[1]:
            raise ValueError(f"self-loop {k}")
        if x:
            rem[k] = int(x)

    out_adj: dict = {}
    order: dict = {}
    for u, v in rem:
        out_adj.setdefault(u, []).append(v)
        out_adj.setdefault(v, [])
        order.setdefault(u, len(order))
        order.setdefault(v, len(order))
    excess = dict.fromkeys(out_adj, 0)  # out - in
    for (u, v), x in rem.items():
        excess[u] += x
        excess[v] -= x

    def next_hop(u):
        for v in out_adj[u]:
            if rem.get((u, v), 0) > 0:
                return v
        return None

    result = PathSet()

    def take(seq: list, amount: int) -> None:
        for e in zip(seq, seq[1:]):
            rem[e] -= amount
            if rem[e] == 0:
                del rem[e]

    def walk(start):
        """Follow positive edges from ``start`` until hitting a sink node
        (path) or revisiting a node (cycle)."""
        seq = [start]
        pos = {start: 0}
        while True:
            u = seq[-1]
            if u != start and excess[u] < 0:
                return "path", seq
            v = next_hop(u)
            if v is None:
                raise AssertionError("flow walk got stuck; input not a valid flow")
            if v in pos:
                return "cycle", seq[pos[v]:] + [v]
            pos[v] = len(seq)
            seq.append(v)

    sources = sorted((n for n, x in excess.items() if x > 0), key=order.get)
    for s in sources:
        while excess[s] > 0:
            kind, seq = walk(s)
            amount = min(rem[e] for e in zip(seq, seq[1:]))
            if kind == "path":
                amount = min(amount, excess[s], -excess[seq[-1]])
                excess[s] -= amount
                excess[seq[-1]] += amount
                result.paths.append((seq, amount))
            else:
                result.cycles.append((seq, amount))
            take(seq, amount)

    while rem:
        u = min((e[0] for e in rem), key=order.get)
        kind, seq = walk(u)
        amount = min(rem[e] for e in zip(seq, seq[1:]))
        result.cycles.append((seq, amount))
        take(seq, amount)
    return _merge(result)


def _merge(ps: PathSet) -> PathSet:
    """Combine identical paths (and identical cycles) into one entry."""

    def merge(items):
        acc: dict[tuple, int] = {}
        for seq, k in items:
            acc[tuple(seq)] = acc.get(tuple(seq), 0) + k
        return [(list(s), k) for s, k in acc.items()]

    return PathSet(merge(ps.paths), merge(ps.cycles))


# ---------------------------------------------------------------------------
# region bookkeeping


@dataclass
class RegionState:
    region_ids: list
    idle: list[int]  # v_i
    inbound: list[int]  # sum_j v_ji
    owned: list[int]  # v_i + sum_j v_ji
    waiting: list[int]  # c_i
    excess: list[int]  # v^e_i
    desired: list[int]  # v^d_i

    @property
    def origins(self) -> list:
        return [r for r, e, d in zip(self.region_ids, self.excess, self.desired) if e > d]

    @property
    def destinations(self) -> list:
        return [r for r, e, d in zip(self.region_ids, self.excess, self.desired) if e < d]


def even_split(total: int, n: int) -> list[int]:
    """Split an integer total as evenly as possible across ``n`` slots.

    Largest-remainder rounding of ``total / n``: all remainders tie, so the
    extra units go to the lowest-indexed slots. Negative totals are
    clamped to zero.
    """
    if n <= 0:
        return []
    total = max(int(total), 0)
    base, extra = divmod(total, n)
    return [base + (1 if i < extra else 0) for i in range(n)]


@dataclass
class VehicleSnapshot:
    """One vehicle as seen by the rebalancer.

    ``region`` is where it is now; ``target_region``/``eta`` describe where it
    becomes free next (for vehicles still moving).
    """

    id: int
    region: object
    status: str  # idle | to_pickup | with_customer | rebalancing
    target_region: object = None
    eta: float = 0.0


def compute_region_state(
    region_ids: Sequence,
    vehicles: Sequence[VehicleSnapshot],
    waiting: Mapping,
    t_vicinity: float,
) -> RegionState:
    """Per-region vehicle ownership with excess and desired counts.

    Idle vehicles count towards the region they stand in. Vehicles carrying a
    customer or rebalancing count towards their destination region if they
    arrive within ``t_vicinity``. Vehicles driving to a pickup are committed
    and count nowhere.
    """
    pos = {r: i for i, r in enumerate(region_ids)}
    n = len(region_ids)
    idle = [0] * n
    inbound = [0] * n
    for v in vehicles:
        if v.status == "idle":
            idle[pos[v.region]] += 1
        elif v.status in ("with_customer", "rebalancing"):
            if v.target_region is not None and v.eta <= t_vicinity:
                inbound[pos[v.target_region]] += 1
    owned = [a + b for a, b in zip(idle, inbound)]
    wait = [int(waiting.get(r, 0)) for r in region_ids]
    excess = [o - c for o, c in zip(owned, wait)]
    desired = even_split(sum(excess), n)
    return RegionState(list(region_ids), idle, inbound, owned, wait, excess, desired)
