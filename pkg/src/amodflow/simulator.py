"""Fixed-step fleet simulator with event-based customer routing and periodic
batch rebalancing.

Each step: ingest arrivals, match waiting customers to the nearest idle
vehicle of their region, route with A* against the current BPR delays,
rebalance every ``rebalance_period`` seconds, then advance every vehicle
along its route at the speeds implied by the step's edge loads.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import lp as lpmod
from .netgraph import RoadNetwork
from .rebalance import (
    RebalanceInstance,
    RegionState,
    VehicleSnapshot,
    compute_region_state,
    flow_decompose,
    solve_realtime_rebalance,
)
from .routing import (
    BprParams,
    Heuristic,
    NoRouteError,
    astar_route,
    bpr_delay,
    free_flow_times_from,
    free_flow_times_to,
)

log = logging.getLogger(__name__)

REBALANCERS = ("congestion_aware", "baseline_p2p", "none")
IDLE, TO_PICKUP, WITH_CUSTOMER, REBALANCING = "idle", "to_pickup", "with_customer", "rebalancing"
LONG_WAIT = 300.0


@dataclass
class SimConfig:
    time_step: float = 6.0
    rebalance_period: float = 120.0
    t_vicinity: Optional[float] = None  # None -> rebalance_period
    fleet_size: int = 50
    free_flow_speed: float = 11.0
    bpr: BprParams = field(default_factory=BprParams)
    rebalancer: str = "congestion_aware"
    seed: int = 0
    duration: float = 3600.0
    capacity_multiplier: float = 1.0
    num_regions: int = 8
    initial_placement: str = "balanced"  # balanced | random
    residual_mode: str = "occupancy"  # occupancy | horizon
    rebalance_lp: str = "highs"  # dense | highs | auto
    flow_window: Optional[float] = None  # flow = count / window; None -> edge free-flow time
    check_invariants: bool = False

    def __post_init__(self) -> None:
        if self.time_step <= 0:
            raise ValueError("time_step must be positive")
        ratio = self.rebalance_period / self.time_step
        if self.rebalance_period <= 0 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("rebalance_period must be a positive multiple of time_step")
        if self.rebalancer not in REBALANCERS:
            raise ValueError(f"unknown rebalancer {self.rebalancer!r}")
        if self.initial_placement not in ("balanced", "random"):
            raise ValueError(f"unknown initial placement {self.initial_placement!r}")
        if self.residual_mode not in ("horizon", "occupancy"):
            raise ValueError(f"unknown residual mode {self.residual_mode!r}")
        if self.rebalance_lp not in ("dense", "highs", "auto"):
            raise ValueError(f"unknown LP method {self.rebalance_lp!r}")
        if self.flow_window is not None and self.flow_window <= 0:
            raise ValueError("flow_window must be positive")
        if self.fleet_size < 0 or self.duration < 0 or self.capacity_multiplier <= 0:
            raise ValueError("fleet_size, duration must be >= 0 and capacity_multiplier > 0")

    @property
    def vicinity(self) -> float:
        return self.rebalance_period if self.t_vicinity is None else self.t_vicinity

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bpr"] = {"alpha": self.bpr.alpha, "beta": self.bpr.beta}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "bpr" in d and isinstance(d["bpr"], dict):
            d["bpr"] = BprParams(**d["bpr"])
        return cls(**d)


@dataclass(frozen=True)
class Trip:
    arrival_time: float
    origin: str
    dest: str


@dataclass
class Regions:
    ids: list[int]
    anchors: list[str]
    members: list[list[str]]

    def __post_init__(self) -> None:
        self.of = {n: rid for rid, mem in zip(self.ids, self.members) for n in mem}
        self.anchor_of = dict(zip(self.ids, self.anchors))
        self.region_of_anchor = {a: rid for rid, a in zip(self.ids, self.anchors)}


def build_regions(network: RoadNetwork, k: int, seed: int = 0) -> Regions:
    """k-means clustering of node coordinates; each region's anchor is the
    member node closest to the cluster centroid."""
    from scipy.cluster.vq import kmeans2

    if not network.has_coords:
        raise ValueError("region clustering needs node coordinates")
    nodes = list(network.nodes)
    pts = np.array([network.coords[n] for n in nodes], dtype=float)
    k = max(1, min(k, len(nodes)))
    if k == 1:
        labels = np.zeros(len(nodes), dtype=int)
        centroids = pts.mean(axis=0, keepdims=True)
    else:
        centroids, labels = kmeans2(pts, k, minit="++", seed=np.random.default_rng(seed))
    ids, anchors, members = [], [], []
    for c in range(len(centroids)):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            continue
        d = np.hypot(*(pts[idx] - centroids[c]).T)
        best = idx[int(np.argmin(d))]
        ids.append(len(ids))
        anchors.append(nodes[best])
        members.append([nodes[i] for i in idx])
    return Regions(ids, anchors, members)


@dataclass
class Vehicle:
    id: int
    node: str
    status: str = IDLE
    edge: Optional[tuple[str, str]] = None
    progress: float = 0.0
    path: list[str] = field(default_factory=list)  # nodes still to reach
    customer: Optional[int] = None
    customer_path: list[str] = field(default_factory=list)


@dataclass
class Customer:
    id: int
    origin: str
    dest: str
    arrival: float
    pickup: Optional[float] = None
    dropoff: Optional[float] = None
    vehicle: Optional[int] = None


@dataclass
class SimMetrics:
    trips_total: int
    trips_completed: int
    mean_wait: float
    mean_travel: float
    mean_service: float
    pct_wait_over_5min: float
    mean_rebalancing_vehicles: float
    rebalancing_dispatches: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TraceRow:
    clock: float
    waiting: int
    in_progress: int
    congested_edges: int
    rebalancing: int


@dataclass
class SimResult:
    metrics: SimMetrics
    trace: list[TraceRow]
    customers: list[Customer]


class Simulation:
    def __init__(self, network: RoadNetwork, trips: Sequence[Trip], config: SimConfig,
                 regions: Optional[Regions] = None):
        last = -math.inf
        known = set(network.nodes)
        for t in trips:
            if t.arrival_time < last:
                raise ValueError("trips must be sorted by arrival time")
            if t.origin not in known or t.dest not in known:
                raise ValueError(f"trip references unknown node: {t}")
            if t.origin == t.dest:
                raise ValueError(f"trip with identical origin and destination: {t}")
            last = t.arrival_time
        self.net = network
        self.cfg = config
        self.trips = list(trips)
        self.regions = regions or build_regions(network, config.num_regions, config.seed)
        self.cap = {e.key: e.capacity * config.capacity_multiplier for e in network.edges}
        self.tfree = {e.key: e.free_flow_time for e in network.edges}
        self.heuristic = Heuristic(network, "free_flow")
        self._ff_to: dict[str, dict[str, float]] = {}
        self.counts = dict.fromkeys(self.tfree, 0)
        self.clock = 0.0
        self.customers: list[Customer] = []
        self.queue: deque[int] = deque()
        self.trace: list[TraceRow] = []
        self.dispatches = 0
        self.vehicles = self._place_fleet()

    # -- setup -------------------------------------------------------------
    def _place_fleet(self) -> list[Vehicle]:
        n = self.cfg.fleet_size
        if self.cfg.initial_placement == "balanced":
            anchors = self.regions.anchors
            return [Vehicle(i, anchors[i % len(anchors)]) for i in range(n)]
        rng = np.random.default_rng(self.cfg.seed)
        picks = rng.integers(0, len(self.net.nodes), size=n)
        return [Vehicle(i, self.net.nodes[int(p)]) for i, p in enumerate(picks)]

    def ff_to(self, node: str) -> dict[str, float]:
        table = self._ff_to.get(node)
        if table is None:
            table = self._ff_to[node] = free_flow_times_to(self.net, node)
        return table

    # -- loads -------------------------------------------------------------
    def window(self, key) -> float:
        return self.cfg.flow_window if self.cfg.flow_window is not None else self.tfree[key]

    def edge_flow(self, key) -> float:
        """Vehicles currently on an edge divided by the flow window
        (its free-flow time unless configured otherwise)."""
        w = self.window(key)
        return self.counts[key] / w if w > 0 else 0.0

    def delays(self) -> dict:
        out = {}
        bpr = self.cfg.bpr
        for k, t in self.tfree.items():
            c = self.counts[k]
            out[k] = t if c == 0 else bpr_delay(t, self.edge_flow(k), self.cap[k], bpr)
        return out

    def congested_edges(self) -> int:
        return sum(1 for k in self.tfree if self.counts[k] and self.edge_flow(k) > self.cap[k])

    def route(self, a: str, b: str, delays) -> list[str]:
        path, _ = astar_route(self.net, {}, self.cfg.bpr, a, b, self.heuristic, delays)
        return path

    # -- customers -----------------------------------------------------------
    def assign(self, delays) -> None:
        if not self.queue:
            return
        idle_by_region: dict[int, list[Vehicle]] = {}
        for v in self.vehicles:
            if v.status == IDLE:
                idle_by_region.setdefault(self.regions.of[v.node], []).append(v)
        still = deque()
        while self.queue:
            cid = self.queue.popleft()
            c = self.customers[cid]
            pool = idle_by_region.get(self.regions.of[c.origin], [])
            table = self.ff_to(c.origin)
            best = None
            for v in pool:
                d = table.get(v.node, math.inf)
                if math.isfinite(d) and (best is None or d < best[0]):
                    best = (d, v)
            if best is None:
                still.append(cid)
                continue
            v = best[1]
            try:
                to_pickup = self.route(v.node, c.origin, delays)
                trip = self.route(c.origin, c.dest, delays)
            except NoRouteError:
                still.append(cid)
                continue
            pool.remove(v)
            v.customer = cid
            c.vehicle = v.id
            v.customer_path = trip[1:]
            if v.node == c.origin:
                c.pickup = self.clock
                v.status = WITH_CUSTOMER
                v.path = list(v.customer_path)
                v.customer_path = []
            else:
                v.status = TO_PICKUP
                v.path = to_pickup[1:]
        self.queue = still

    # -- rebalancing -----------------------------------------------------------
    def region_state(self, delays) -> RegionState:
        snaps = []
        for v in self.vehicles:
            if v.status == IDLE:
                snaps.append(VehicleSnapshot(v.id, self.regions.of[v.node], IDLE))
            elif v.status in (WITH_CUSTOMER, REBALANCING):
                end = v.path[-1] if v.path else v.node
                snaps.append(VehicleSnapshot(v.id, self.regions.of[v.node], v.status,
                                             self.regions.of[end], self.eta(v, delays)))
            else:
                snaps.append(VehicleSnapshot(v.id, self.regions.of[v.node], v.status))
        waiting: dict[int, int] = {}
        for cid in self.queue:
            r = self.regions.of[self.customers[cid].origin]
            waiting[r] = waiting.get(r, 0) + 1
        return compute_region_state(self.regions.ids, snaps, waiting, self.cfg.vicinity)

    def eta(self, v: Vehicle, delays) -> float:
        t = 0.0
        node = v.node
        rest = list(v.path)
        if v.edge is not None:
            t += (1.0 - v.progress) * delays[v.edge]
            node = v.edge[1]
            rest = rest[1:]
        for nxt in rest:
            t += delays[(node, nxt)]
            node = nxt
        return t

    def residual_capacity(self) -> dict:
        """Extra vehicles each edge can take: ``occupancy`` counts room below
        the congestion threshold ``capacity * window``; ``horizon`` counts
        throughput over one rebalancing period."""
        out = {}
        horizon = self.cfg.residual_mode == "horizon"
        for k in self.tfree:
            room = self.cap[k] * (self.cfg.rebalance_period if horizon else self.window(k))
            out[k] = max(0, int(math.floor(room - self.counts[k] + 1e-9)))
        return out

    def _idle_in(self, region: int, near: str) -> list[Vehicle]:
        table = self.ff_to(near)
        pool = [v for v in self.vehicles if v.status == IDLE and self.regions.of[v.node] == region]
        pool.sort(key=lambda v: (table.get(v.node, math.inf), v.id))
        return pool

    def _send(self, v: Vehicle, path_nodes: list[str]) -> None:
        if len(path_nodes) < 2:
            return
        v.status = REBALANCING
        v.path = path_nodes[1:]
        self.dispatches += 1

    def rebalance(self, delays) -> None:
        mode = self.cfg.rebalancer
        if mode == "none":
            return
        state = self.region_state(delays)
        if not state.origins or not state.destinations:
            return
        if mode == "congestion_aware":
            self._rebalance_network(state, delays)
        else:
            self._rebalance_p2p(state, delays)

    def _rebalance_network(self, state: RegionState, delays) -> None:
        inst = RebalanceInstance(
            region_ids=list(state.region_ids),
            anchors=list(self.regions.anchors),
            excess=list(state.excess),
            desired=list(state.desired),
            residual=self.residual_capacity(),
        )
        result = solve_realtime_rebalance(inst, self.net, lp_method=self.cfg.rebalance_lp)
        paths = flow_decompose(result.flow).paths
        for seq, k in paths:
            start = seq[0]
            region = self.regions.region_of_anchor.get(start)
            if region is None:
                continue
            for v in self._idle_in(region, start)[:k]:
                i = self._join_point(v.node, seq)
                if seq[i] == v.node:
                    self._send(v, seq[i:])
                    continue
                try:
                    approach = self.route(v.node, seq[i], delays)
                except NoRouteError:
                    continue
                self._send(v, approach + seq[i + 1:])

    def _join_point(self, node: str, seq: list[str]) -> int:
        """Index of the path node where joining minimises free-flow time to
        the path's end; ties go to the earliest node."""
        reach = free_flow_times_from(self.net, node)
        tail = 0.0
        best_i, best = 0, math.inf
        for i in range(len(seq) - 1, -1, -1):
            if i < len(seq) - 1:
                tail += self.tfree[(seq[i], seq[i + 1])]
                cost = reach.get(seq[i], math.inf) + tail
                if cost <= best:
                    best_i, best = i, cost
        return best_i

    def _rebalance_p2p(self, state: RegionState, delays) -> None:
        for src, dst, k in baseline_p2p_rebalance(state, self.regions, self.net, self.ff_to):
            target = self.regions.anchor_of[dst]
            for v in self._idle_in(src, self.regions.anchor_of[src])[:k]:
                try:
                    self._send(v, self.route(v.node, target, delays))
                except NoRouteError:
                    continue

    # -- movement ------------------------------------------------------------
    def move(self, delays) -> None:
        dt = self.cfg.time_step
        for v in self.vehicles:
            if v.status == IDLE:
                continue
            remaining = dt
            now = self.clock
            while True:
                if v.edge is None:
                    if not v.path:
                        self._leg_end(v, now)
                        if v.status == IDLE or not v.path:
                            break
                    v.edge = (v.node, v.path[0])
                    v.progress = 0.0
                    self.counts[v.edge] += 1
                td = delays[v.edge]
                need = (1.0 - v.progress) * td
                if need <= remaining:
                    remaining -= need
                    now += need
                    self.counts[v.edge] -= 1
                    v.node = v.edge[1]
                    v.edge = None
                    v.progress = 0.0
                    v.path.pop(0)
                    if not v.path:
                        self._leg_end(v, now)
                        if v.status == IDLE or not v.path:
                            break
                else:
                    v.progress += remaining / td
                    break

    def _leg_end(self, v: Vehicle, when: float) -> None:
        if v.status == TO_PICKUP:
            c = self.customers[v.customer]
            c.pickup = when
            v.status = WITH_CUSTOMER
            v.path = list(v.customer_path)
            v.customer_path = []
        elif v.status == WITH_CUSTOMER:
            c = self.customers[v.customer]
            c.dropoff = when
            v.customer = None
            v.status = IDLE
        elif v.status == REBALANCING:
            v.status = IDLE

    # -- main loop -------------------------------------------------------------
    def _check(self, arrived: int) -> None:
        waiting = len(self.queue)
        done = sum(1 for c in self.customers if c.dropoff is not None)
        in_prog = sum(1 for c in self.customers if c.vehicle is not None and c.dropoff is None)
        assert arrived == waiting + done + in_prog, "customer accounting broken"
        assert len(self.vehicles) == self.cfg.fleet_size
        on_edge: dict = {}
        for v in self.vehicles:
            if v.edge is not None:
                on_edge[v.edge] = on_edge.get(v.edge, 0) + 1
        assert all(self.counts[k] == on_edge.get(k, 0) for k in self.counts), "edge counts drifted"

    def run(self) -> SimResult:
        cfg = self.cfg
        steps = int(math.floor(cfg.duration / cfg.time_step + 1e-9))
        every = int(round(cfg.rebalance_period / cfg.time_step))
        nxt = 0
        reb_samples = []
        for step in range(steps + 1):
            self.clock = step * cfg.time_step
            while nxt < len(self.trips) and self.trips[nxt].arrival_time <= self.clock + 1e-9:
                t = self.trips[nxt]
                self.customers.append(Customer(len(self.customers), t.origin, t.dest, t.arrival_time))
                self.queue.append(len(self.customers) - 1)
                nxt += 1
            delays = self.delays()
            self.assign(delays)
            if step % every == 0:
                self.rebalance(delays)
            if step == steps:
                break
            self.move(delays)
            n_reb = sum(1 for v in self.vehicles if v.status == REBALANCING)
            reb_samples.append(n_reb)
            in_prog = sum(1 for v in self.vehicles if v.customer is not None)
            self.trace.append(TraceRow(self.clock + cfg.time_step, len(self.queue), in_prog,
                                       self.congested_edges(), n_reb))
            if cfg.check_invariants:
                self._check(nxt)
        return SimResult(self._metrics(reb_samples), self.trace, self.customers)

    def _metrics(self, reb_samples) -> SimMetrics:
        end = self.clock
        waits, travels, services = [], [], []
        for c in self.customers:
            if c.pickup is not None:
                waits.append(c.pickup - c.arrival)
            else:
                waits.append(end - c.arrival)
            if c.dropoff is not None:
                w = c.pickup - c.arrival
                tr = c.dropoff - c.pickup
                travels.append(tr)
                services.append(w + tr)
        mean = lambda xs: float(np.mean(xs)) if xs else 0.0  # noqa: E731
        over = 100.0 * sum(1 for w in waits if w > LONG_WAIT) / len(waits) if waits else 0.0
        return SimMetrics(
            trips_total=len(self.customers),
            trips_completed=len(travels),
            mean_wait=mean(waits),
            mean_travel=mean(travels),
            mean_service=mean(services),
            pct_wait_over_5min=over,
            mean_rebalancing_vehicles=mean(reb_samples),
            rebalancing_dispatches=self.dispatches,
        )


def run(network: RoadNetwork, trips: Sequence[Trip], config: SimConfig,
        regions: Optional[Regions] = None) -> SimResult:
    return Simulation(network, trips, config, regions).run()


def baseline_p2p_rebalance(state: RegionState, regions: Regions, network: RoadNetwork, ff_to=None):
    """Point-to-point rebalancing that ignores road capacities.

    Solves the transportation problem matching surplus regions to deficit
    regions at minimum total anchor-to-anchor free-flow time. Returns
    ``[(from_region, to_region, vehicles)]`` sorted by region ids.
    """
    if ff_to is None:
        cache: dict = {}

        def ff_to(node):
            if node not in cache:
                cache[node] = free_flow_times_to(network, node)
            return cache[node]

    sup = {r: e - d for r, e, d in zip(state.region_ids, state.excess, state.desired) if e > d}
    dem = {r: d - e for r, e, d in zip(state.region_ids, state.excess, state.desired) if e < d}
    if not sup or not dem:
        return []
    prog = lpmod.LinearProgram()
    var = {}
    big = 0.0
    for i in sup:
        for j in dem:
            t = ff_to(regions.anchor_of[j]).get(regions.anchor_of[i], math.inf)
            if math.isfinite(t):
                var[(i, j)] = (t, None)
                big = max(big, t)
    # leftover supply or demand is allowed at a prohibitive price
    penalty = 1.0 + big * (sum(sup.values()) + sum(dem.values()))
    for (i, j), (t, _) in list(var.items()):
        var[(i, j)] = (t, prog.add_variable(t, name=f"x[{i}>{j}]"))
    s_slack = {i: prog.add_variable(penalty, 0.0, sup[i], name=f"s[{i}]") for i in sup}
    d_slack = {j: prog.add_variable(penalty, 0.0, dem[j], name=f"t[{j}]") for j in dem}
    for i in sup:
        coeffs = {var[(i, j)][1]: 1.0 for j in dem if (i, j) in var}
        coeffs[s_slack[i]] = 1.0
        prog.add_constraint(coeffs, "==", sup[i])
    for j in dem:
        coeffs = {var[(i, j)][1]: 1.0 for i in sup if (i, j) in var}
        coeffs[d_slack[j]] = 1.0
        prog.add_constraint(coeffs, "==", dem[j])
    sol = lpmod.solve_lp(prog, method="dense")
    if not sol.ok:
        raise RuntimeError(f"transportation problem failed: {sol.status}")
    out = []
    for (i, j), (_, col) in sorted(var.items()):
        k = int(round(sol.x[col]))
        if k > 0:
            out.append((i, j, k))
    return out


@dataclass
class ComparisonReport:
    names: list[str]
    metrics: list[SimMetrics]
    congested_series: list[list[int]]

    def to_dict(self) -> dict:
        return {
            name: {"metrics": m.to_dict(), "congested_edges": s}
            for name, m, s in zip(self.names, self.metrics, self.congested_series)
        }


def _run_one(args):
    network, trips, config, regions = args
    return run(network, trips, config, regions)


def compare(network: RoadNetwork, trips: Sequence[Trip], configs: Sequence[SimConfig],
            names: Optional[Sequence[str]] = None, workers: int = 1) -> ComparisonReport:
    """Run several configurations on identical inputs.

    Regions are built once from the first config's ``num_regions`` and seed
    so every run shares the same partition.
    """
    if not configs:
        return ComparisonReport([], [], [])
    regions = build_regions(network, configs[0].num_regions, configs[0].seed)
    jobs = [(network, list(trips), c, regions) for c in configs]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    names = list(names) if names is not None else [f"{i}:{c.rebalancer}" for i, c in enumerate(configs)]
    return ComparisonReport(names, [r.metrics for r in results],
                            [[row.congested_edges for row in r.trace] for r in results])
