"""Capacitated road networks with cut and capacity-symmetry analysis.

Node ids are strings (anything hashable and mutually comparable works, but
the JSON formats use strings). Edges are keyed by the ordered pair ``(u, v)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

EXHAUSTIVE_CUT_LIMIT = 20
DEFAULT_SYMMETRY_TOLERANCE = 1e-3


@dataclass(frozen=True)
class Edge:
    u: str
    v: str
    capacity: float
    free_flow_time: float

    @property
    def key(self) -> tuple[str, str]:
        return (self.u, self.v)


@dataclass
class RoadNetwork:
    """Directed graph with per-edge capacity (vehicles per unit time) and
    free-flow traversal time.

    ``coords`` maps node id to planar (x, y) in meters and may be empty.
    ``projection`` holds the (lat0, lon0) origin when the coordinates came
    from a geographic projection.
    """

    nodes: list[str]
    edges: list[Edge]
    coords: dict[str, tuple[float, float]] = field(default_factory=dict)
    projection: Optional[tuple[float, float]] = None

    def __post_init__(self) -> None:
        self._index: Optional[dict] = None

    # -- lookups --------------------------------------------------------
    def _build_index(self) -> dict:
        node_pos = {n: i for i, n in enumerate(self.nodes)}
        edge_pos: dict[tuple[str, str], int] = {}
        out_adj: dict[str, list[int]] = {n: [] for n in self.nodes}
        in_adj: dict[str, list[int]] = {n: [] for n in self.nodes}
        for k, e in enumerate(self.edges):
            edge_pos.setdefault(e.key, k)
            out_adj.setdefault(e.u, []).append(k)
            in_adj.setdefault(e.v, []).append(k)
        return {"node": node_pos, "edge": edge_pos, "out": out_adj, "in": in_adj}

    @property
    def index(self) -> dict:
        if self._index is None:
            self._index = self._build_index()
        return self._index

    def node_position(self, node: str) -> int:
        return self.index["node"][node]

    def edge(self, u: str, v: str) -> Edge:
        return self.edges[self.index["edge"][(u, v)]]

    def edge_id(self, u: str, v: str) -> int:
        return self.index["edge"][(u, v)]

    def has_edge(self, u: str, v: str) -> bool:
        return (u, v) in self.index["edge"]

    def out_edges(self, node: str) -> list[Edge]:
        return [self.edges[k] for k in self.index["out"].get(node, [])]

    def in_edges(self, node: str) -> list[Edge]:
        return [self.edges[k] for k in self.index["in"].get(node, [])]

    @property
    def edge_keys(self) -> list[tuple[str, str]]:
        return [e.key for e in self.edges]

    @property
    def has_coords(self) -> bool:
        return bool(self.nodes) and all(n in self.coords for n in self.nodes)

    def with_capacities(self, capacities: Mapping[tuple[str, str], float]) -> "RoadNetwork":
        """Copy with the capacities of the given edges replaced."""
        edges = [
            Edge(e.u, e.v, capacities.get(e.key, e.capacity), e.free_flow_time)
            for e in self.edges
        ]
        return RoadNetwork(list(self.nodes), edges, dict(self.coords), self.projection)

    def scaled(self, factor: float) -> "RoadNetwork":
        """Copy with every capacity multiplied by ``factor``."""
        return self.with_capacities({e.key: e.capacity * factor for e in self.edges})

    def relabeled(self, mapping: Mapping[str, str]) -> "RoadNetwork":
        edges = [Edge(mapping[e.u], mapping[e.v], e.capacity, e.free_flow_time) for e in self.edges]
        coords = {mapping[n]: xy for n, xy in self.coords.items()}
        return RoadNetwork([mapping[n] for n in self.nodes], edges, coords, self.projection)

    def edge_length(self, e: Edge) -> Optional[float]:
        if e.u in self.coords and e.v in self.coords:
            (x0, y0), (x1, y1) = self.coords[e.u], self.coords[e.v]
            return math.hypot(x1 - x0, y1 - y0)
        return None

    # -- JSON -----------------------------------------------------------
    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            entry: dict = {"id": n}
            if n in self.coords:
                entry["x"], entry["y"] = self.coords[n]
            nodes.append(entry)
        out = {
            "nodes": nodes,
            "edges": [
                {"from": e.u, "to": e.v, "capacity": e.capacity, "free_flow_time": e.free_flow_time}
                for e in self.edges
            ],
        }
        if self.projection is not None:
            out["projection"] = {"lat0": self.projection[0], "lon0": self.projection[1]}
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "RoadNetwork":
        nodes, coords = [], {}
        for entry in data["nodes"]:
            nid = str(entry["id"])
            nodes.append(nid)
            if "x" in entry and "y" in entry:
                coords[nid] = (float(entry["x"]), float(entry["y"]))
        edges = [
            Edge(str(e["from"]), str(e["to"]), float(e["capacity"]), float(e["free_flow_time"]))
            for e in data["edges"]
        ]
        projection = None
        if "projection" in data:
            projection = (float(data["projection"]["lat0"]), float(data["projection"]["lon0"]))
        return cls(nodes, edges, coords, projection)

    @classmethod
    def load(cls, path) -> "RoadNetwork":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Request:
    origin: str
    dest: str
    rate: float


@dataclass
class RequestSet:
    requests: list[Request] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.requests)

    def __iter__(self) -> Iterator[Request]:
        return iter(self.requests)

    def __getitem__(self, m: int) -> Request:
        return self.requests[m]

    @property
    def total_rate(self) -> float:
        return sum(r.rate for r in self.requests)

    def origin_rate(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for r in self.requests:
            out[r.origin] = out.get(r.origin, 0.0) + r.rate
        return out

    def dest_rate(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for r in self.requests:
            out[r.dest] = out.get(r.dest, 0.0) + r.rate
        return out

    def to_dict(self) -> dict:
        return {"requests": [{"origin": r.origin, "dest": r.dest, "rate": r.rate} for r in self.requests]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "RequestSet":
        return cls([Request(str(r["origin"]), str(r["dest"]), float(r["rate"])) for r in data["requests"]])

    @classmethod
    def load(cls, path) -> "RequestSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Cut:
    s_side: frozenset

    @classmethod
    def of(cls, nodes: Iterable[str]) -> "Cut":
        return cls(frozenset(nodes))

    def complement(self, network: RoadNetwork) -> "Cut":
        return Cut(frozenset(n for n in network.nodes if n not in self.s_side))


@dataclass
class CutReport:
    c_out: float
    c_in: float
    demand_across: float
    disparity: float
    f_out: Optional[float] = None
    f_in: Optional[float] = None


@dataclass
class ConditionReport:
    passed: bool
    cuts_checked: int
    worst_cut: Optional[Cut] = None
    worst_margin: float = 0.0  # max over cuts of demand_across - min(c_out, c_in)
    violated_condition: Optional[int] = None  # 1 = outbound capacity, 2 = inbound capacity


# ---------------------------------------------------------------------------
# validation


def validate(network: RoadNetwork) -> list[str]:
    """Return the structural problems of ``network``; empty when well-formed."""
    problems = []
    known = set(network.nodes)
    if len(known) != len(network.nodes):
        problems.append("duplicate node id")
    seen = set()
    for e in network.edges:
        label = f"({e.u}, {e.v})"
        if e.u == e.v:
            problems.append(f"self-loop {label}")
        if e.key in seen:
            problems.append(f"duplicate edge {label}")
        seen.add(e.key)
        if not (e.capacity > 0) or not math.isfinite(e.capacity):
            problems.append(f"nonpositive capacity {label}")
        if not (e.free_flow_time >= 0) or not math.isfinite(e.free_flow_time):
            problems.append(f"negative free_flow_time {label}")
        for end in (e.u, e.v):
            if end not in known:
                problems.append(f"unknown node {end!r} in edge {label}")
    return problems


def validate_requests(network: RoadNetwork, requests: RequestSet) -> list[str]:
    problems = []
    known = set(network.nodes)
    for m, r in enumerate(requests):
        if r.origin == r.dest:
            problems.append(f"request {m}: origin equals destination")
        if not (r.rate > 0) or not math.isfinite(r.rate):
            problems.append(f"request {m}: nonpositive rate")
        for end in (r.origin, r.dest):
            if end not in known:
                problems.append(f"request {m}: unknown node {end!r}")
    return problems


# ---------------------------------------------------------------------------
# symmetry


def node_capacity_balance(network: RoadNetwork) -> dict[str, tuple[float, float]]:
    """Map node -> (capacity entering, capacity leaving)."""
    bal = {n: [0.0, 0.0] for n in network.nodes}
    for e in network.edges:
        bal[e.v][0] += e.capacity
        bal[e.u][1] += e.capacity
    return {n: (a, b) for n, (a, b) in bal.items()}


def is_capacity_symmetric(
    network: RoadNetwork, tolerance: float = DEFAULT_SYMMETRY_TOLERANCE
) -> tuple[bool, float]:
    """Node-level capacity balance test.

    Returns ``(symmetric, worst)`` where ``worst`` is the largest
    ``|in - out| / (in + out)`` over nodes with any incident capacity.
    Checking nodes is enough: balance at every node is equivalent to
    balance across every cut.
    """
    worst = 0.0
    ok = True
    for c_in, c_out in node_capacity_balance(network).values():
        total = c_in + c_out
        if total <= 0:
            continue
        gap = abs(c_in - c_out)
        worst = max(worst, gap / total)
        if gap > tolerance * total:
            ok = False
    return ok, worst


def disparity(c_out: float, c_in: float) -> float:
    total = c_out + c_in
    if total <= 0:
        return 0.0
    return 2.0 * abs(c_out - c_in) / total


# ---------------------------------------------------------------------------
# cuts


def _check_cut(network: RoadNetwork, cut: Cut) -> None:
    s = cut.s_side
    if not s:
        raise ValueError("cut has an empty S side")
    unknown = s.difference(network.nodes)
    if unknown:
        raise ValueError(f"cut references unknown nodes {sorted(unknown)}")
    if len(s) >= len(set(network.nodes)):
        raise ValueError("cut S side contains every node")


def cut_capacities(network: RoadNetwork, s_side: frozenset) -> tuple[float, float]:
    c_out = c_in = 0.0
    for e in network.edges:
        a, b = e.u in s_side, e.v in s_side
        if a and not b:
            c_out += e.capacity
        elif b and not a:
            c_in += e.capacity
    return c_out, c_in


def demand_across(requests: RequestSet, s_side: frozenset) -> float:
    return sum(r.rate for r in requests if r.origin in s_side and r.dest not in s_side)


def cut_report(
    network: RoadNetwork,
    cut: Cut,
    requests: Optional[RequestSet] = None,
    flows=None,
) -> CutReport:
    """Capacity, demand and (optionally) customer-flow sums across a cut.

    ``flows`` is a :class:`amodflow.crrp.FlowAssignment`; only its customer
    flows enter ``f_out``/``f_in``.
    """
    _check_cut(network, cut)
    s = cut.s_side
    c_out, c_in = cut_capacities(network, s)
    report = CutReport(
        c_out=c_out,
        c_in=c_in,
        demand_across=demand_across(requests, s) if requests is not None else 0.0,
        disparity=disparity(c_out, c_in),
    )
    if flows is not None:
        f_out = f_in = 0.0
        for fm in flows.customer_flows:
            for (u, v), val in fm.items():
                a, b = u in s, v in s
                if a and not b:
                    f_out += val
                elif b and not a:
                    f_in += val
        report.f_out, report.f_in = f_out, f_in
    return report


def enumerate_cuts(network: RoadNetwork) -> Iterator[frozenset]:
    """All nonempty proper node subsets, smallest first."""
    nodes = list(network.nodes)
    for k in range(1, len(nodes)):
        for combo in combinations(nodes, k):
            yield frozenset(combo)


def random_cuts(network: RoadNetwork, count: int, seed: int) -> Iterator[frozenset]:
    """Uniformly random nonempty proper subsets from a seeded generator."""
    nodes = list(network.nodes)
    n = len(nodes)
    if n < 2:
        return
    rng = np.random.default_rng(seed)
    drawn = 0
    while drawn < count:
        mask = rng.integers(0, 2, size=n).astype(bool)
        k = int(mask.sum())
        if k == 0 or k == n:
            continue
        drawn += 1
        yield frozenset(nodes[i] for i in np.flatnonzero(mask))


class _CutEvaluator:
    """Vectorised cut sums over a fixed network and request set."""

    def __init__(self, network: RoadNetwork, requests: Optional[RequestSet] = None):
        pos = {n: i for i, n in enumerate(network.nodes)}
        self.pos = pos
        self.eu = np.array([pos[e.u] for e in network.edges], dtype=np.int64)
        self.ev = np.array([pos[e.v] for e in network.edges], dtype=np.int64)
        self.cap = np.array([e.capacity for e in network.edges], dtype=float)
        reqs = list(requests) if requests is not None else []
        self.ro = np.array([pos[r.origin] for r in reqs], dtype=np.int64)
        self.rd = np.array([pos[r.dest] for r in reqs], dtype=np.int64)
        self.rate = np.array([r.rate for r in reqs], dtype=float)

    def masks(self, subsets: Sequence[frozenset], n: int) -> np.ndarray:
        mask = np.zeros((len(subsets), n), dtype=bool)
        for i, s in enumerate(subsets):
            mask[i, [self.pos[x] for x in s]] = True
        return mask

    def evaluate(self, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        su, sv = mask[:, self.eu], mask[:, self.ev]
        c_out = (su & ~sv) @ self.cap
        c_in = (~su & sv) @ self.cap
        if self.rate.size:
            dem = (mask[:, self.ro] & ~mask[:, self.rd]) @ self.rate
        else:
            dem = np.zeros(mask.shape[0])
        return c_out, c_in, dem


def _batched(it: Iterable[frozenset], size: int) -> Iterator[list[frozenset]]:
    batch: list[frozenset] = []
    for item in it:
        batch.append(item)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def check_cut_conditions(
    network: RoadNetwork,
    requests: RequestSet,
    mode: str = "exhaustive",
    count: int = 1000,
    seed: int = 0,
    tolerance: float = 1e-9,
) -> ConditionReport:
    """Test the structural cut conditions necessary for congestion-free flows.

    For each cut, the demand that must cross it from S to S-bar may not exceed
    the outbound capacity (condition 1) nor the inbound capacity
    (condition 2). ``mode="exhaustive"`` checks every cut and is limited to
    20 nodes; ``mode="sampled"`` draws ``count`` random cuts and can only
    falsify, never certify.
    """
    n = len(network.nodes)
    if mode == "exhaustive":
        if n > EXHAUSTIVE_CUT_LIMIT:
            raise ValueError(
                f"exhaustive cut enumeration needs |V| <= {EXHAUSTIVE_CUT_LIMIT}, got {n}"
            )
        cuts: Iterable[frozenset] = enumerate_cuts(network)
    elif mode == "sampled":
        cuts = random_cuts(network, count, seed)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    ev = _CutEvaluator(network, requests)
    checked = 0
    worst_margin = -math.inf
    worst_cut = None
    worst_cond = None
    for batch in _batched(cuts, 4096):
        c_out, c_in, dem = ev.evaluate(ev.masks(batch, n))
        margin1 = dem - c_out
        margin2 = dem - c_in
        margin = np.maximum(margin1, margin2)
        i = int(np.argmax(margin))
        if margin[i] > worst_margin:
            worst_margin = float(margin[i])
            worst_cut = Cut(batch[i])
            worst_cond = 1 if margin1[i] >= margin2[i] else 2
        checked += len(batch)

    if checked == 0:
        return ConditionReport(True, 0)
    scale = max(1.0, requests.total_rate)
    passed = worst_margin <= tolerance * scale
    return ConditionReport(
        passed=passed,
        cuts_checked=checked,
        worst_cut=worst_cut,
        worst_margin=worst_margin,
        violated_condition=None if passed else worst_cond,
    )


def sample_disparity(network: RoadNetwork, count: int, seed: int) -> tuple[float, float]:
    """Mean and standard deviation of fractional capacity disparity over
    ``count`` uniformly random cuts."""
    if count < 1:
        raise ValueError("count must be >= 1")
    n = len(network.nodes)
    ev = _CutEvaluator(network)
    values = []
    for batch in _batched(random_cuts(network, count, seed), 4096):
        c_out, c_in, _ = ev.evaluate(ev.masks(batch, n))
        total = c_out + c_in
        d = np.zeros_like(total)
        nz = total > 0
        d[nz] = 2.0 * np.abs(c_out[nz] - c_in[nz]) / total[nz]
        values.append(d)
    allv = np.concatenate(values) if values else np.zeros(0)
    if allv.size == 0:
        return 0.0, 0.0
    return float(allv.mean()), float(allv.std())


# ---------------------------------------------------------------------------
# synthetic networks


def grid_network(
    rows: int,
    cols: int,
    spacing: float = 100.0,
    capacity: float = 1.0,
    free_flow_time: Optional[float] = None,
    speed: float = 10.0,
) -> RoadNetwork:
    """Bidirectional ``rows x cols`` grid with equal capacity both ways.

    Node ids are ``"r,c"``; row index grows northwards (increasing y).
    """
    t = spacing / speed if free_flow_time is None else free_flow_time
    nodes, coords, edges = [], {}, []
    name = lambda r, c: f"{r},{c}"  # noqa: E731
    for r in range(rows):
        for c in range(cols):
            nodes.append(name(r, c))
            coords[name(r, c)] = (c * spacing, r * spacing)
    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if rr < rows and cc < cols:
                    edges.append(Edge(name(r, c), name(rr, cc), capacity, t))
                    edges.append(Edge(name(rr, cc), name(r, c), capacity, t))
    return RoadNetwork(nodes, edges, coords)


def bearing_filter(bearing_deg: float, half_width_deg: float = 45.0):
    """Edge filter selecting edges whose displacement points within
    ``half_width_deg`` of a compass bearing (0 = north, 90 = east)."""

    def select(network: RoadNetwork, e: Edge) -> bool:
        if e.u not in network.coords or e.v not in network.coords:
            return False
        (x0, y0), (x1, y1) = network.coords[e.u], network.coords[e.v]
        dx, dy = x1 - x0, y1 - y0
        if dx == 0 and dy == 0:
            return False
        b = math.degrees(math.atan2(dx, dy)) % 360.0
        diff = abs((b - bearing_deg + 180.0) % 360.0 - 180.0)
        return diff <= half_width_deg

    return select
