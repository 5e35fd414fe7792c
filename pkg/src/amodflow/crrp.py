"""Congestion-free routing and rebalancing as a fractional multi-commodity
flow linear program, plus feasibility verification and the asymmetry sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from . import lp as lpmod
from .netgraph import (
    ConditionReport,
    Cut,
    Edge,
    Request,
    RequestSet,
    RoadNetwork,
    check_cut_conditions,
    validate,
    validate_requests,
)
from .routing import BprParams, bpr_delay

EdgeKey = tuple[str, str]

JOINT = "joint"
CUSTOMER_ONLY = "customer_only"
REBALANCE_FIXED = "rebalance_fixed_customers"
VARIANTS = (JOINT, CUSTOMER_ONLY, REBALANCE_FIXED)


class CrrpError(Exception):
    pass


class CrrpInfeasible(CrrpError):
    """No congestion-free solution; ``witness`` is the most violated cut found."""

    def __init__(self, message: str, witness: Optional[ConditionReport] = None):
        super().__init__(message)
        self.witness = witness


class CrrpNumericalError(CrrpError):
    pass


@dataclass
class FlowAssignment:
    customer_flows: list[dict[EdgeKey, float]]
    rebalancing_flow: dict[EdgeKey, float] = field(default_factory=dict)

    def total_flow(self) -> dict[EdgeKey, float]:
        tot: dict[EdgeKey, float] = {}
        for fm in self.customer_flows:
            for e, x in fm.items():
                tot[e] = tot.get(e, 0.0) + x
        for e, x in self.rebalancing_flow.items():
            tot[e] = tot.get(e, 0.0) + x
        return tot

    def customer_total(self) -> dict[EdgeKey, float]:
        tot: dict[EdgeKey, float] = {}
        for fm in self.customer_flows:
            for e, x in fm.items():
                tot[e] = tot.get(e, 0.0) + x
        return tot

    def to_dict(self) -> dict:
        def edges(d):
            return [{"from": u, "to": v, "flow": x} for (u, v), x in d.items() if x != 0.0]

        return {
            "customer_flows": [edges(fm) for fm in self.customer_flows],
            "rebalancing_flow": edges(self.rebalancing_flow),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FlowAssignment":
        def edges(items):
            return {(str(e["from"]), str(e["to"])): float(e["flow"]) for e in items}

        return cls([edges(fm) for fm in data["customer_flows"]], edges(data.get("rebalancing_flow", [])))


@dataclass
class CrrpConfig:
    rho: float = 1.0
    relax_congestion: bool = False
    slack_cost: Optional[float] = None  # None -> default_slack_cost()
    variant: str = JOINT
    lp_method: str = "auto"

    def __post_init__(self) -> None:
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.slack_cost is not None and self.slack_cost <= 0:
            raise ValueError("slack_cost must be > 0")


@dataclass
class CrrpSolution:
    flows: FlowAssignment
    objective: float
    slacks: dict[EdgeKey, float]
    v_min: int
    lp_status: str = lpmod.OPTIMAL

    @property
    def total_slack(self) -> float:
        return float(sum(self.slacks.values()))


def default_slack_cost(network: RoadNetwork, requests: RequestSet) -> float:
    """Per-unit slack cost larger than any routing saving."""
    return sum(e.free_flow_time for e in network.edges) * requests.total_rate + 1.0


# ---------------------------------------------------------------------------
# shadow nodes


@dataclass
class ShadowMap:
    network: RoadNetwork
    requests: RequestSet
    shadow_of: dict[str, str]  # original node -> shadow node

    @property
    def shadow_nodes(self) -> set[str]:
        return set(self.shadow_of.values())

    def is_original_edge(self, key: EdgeKey) -> bool:
        s = self.shadow_nodes
        return key[0] not in s and key[1] not in s


def shadow_transform(network: RoadNetwork, requests: RequestSet) -> ShadowMap:
    """Split every node that is both an origin and a destination.

    The node keeps its origins; a new shadow node joined to it in both
    directions (zero time, capacity = total rate + 1, which can never bind)
    receives its destinations.
    """
    origins = {r.origin for r in requests}
    dests = {r.dest for r in requests}
    both = [n for n in network.nodes if n in origins and n in dests]
    if not both:
        return ShadowMap(network, requests, {})
    taken = set(network.nodes)
    cap = requests.total_rate + 1.0
    shadow_of = {}
    nodes = list(network.nodes)
    edges = list(network.edges)
    coords = dict(network.coords)
    for n in both:
        name = f"{n}~shadow"
        while name in taken:
            name += "'"
        taken.add(name)
        shadow_of[n] = name
        nodes.append(name)
        if n in coords:
            coords[name] = coords[n]
        edges.append(Edge(n, name, cap, 0.0))
        edges.append(Edge(name, n, cap, 0.0))
    reqs = RequestSet([Request(r.origin, shadow_of.get(r.dest, r.dest), r.rate) for r in requests])
    return ShadowMap(RoadNetwork(nodes, edges, coords, network.projection), reqs, shadow_of)


def _lift_customer_flows(shadow: ShadowMap, flows: Sequence[Mapping[EdgeKey, float]]) -> list[dict[EdgeKey, float]]:
    """Express customer flows of the original network on the shadowed one."""
    out = []
    for r, fm in zip(shadow.requests, flows):
        d = dict(fm)
        for n, s in shadow.shadow_of.items():
            if r.dest == s:
                d[(n, s)] = d.get((n, s), 0.0) + r.rate
        out.append(d)
    return out


def _drop_shadow(shadow: ShadowMap, flow: Mapping[EdgeKey, float]) -> dict[EdgeKey, float]:
    return {k: v for k, v in flow.items() if shadow.is_original_edge(k)}


# ---------------------------------------------------------------------------
# LP construction


class CrrpProgram(lpmod.LinearProgram):
    """The CRRP linear program plus the bookkeeping to read flows back."""

    def __init__(self) -> None:
        super().__init__()
        self.shadow: Optional[ShadowMap] = None
        self.customer_var: list[list[int]] = []
        self.rebalance_var: list[int] = []
        self.slack_var: list[int] = []
        self.config: Optional[CrrpConfig] = None


def build_crrp(
    network: RoadNetwork,
    requests: RequestSet,
    config: CrrpConfig,
    customer_flows: Optional[Sequence[Mapping[EdgeKey, float]]] = None,
) -> CrrpProgram:
    """Assemble the CRRP LP.

    Variables are one flow per (request, edge), one rebalancing flow per edge
    and, when relaxed, one congestion slack per edge. ``customer_flows`` is
    required by the ``rebalance_fixed_customers`` variant and pins the
    customer variables to the given values.
    """
    problems = validate(network) + validate_requests(network, requests)
    if problems:
        raise ValueError("; ".join(problems))
    if config.variant == REBALANCE_FIXED and customer_flows is None:
        raise ValueError("rebalance_fixed_customers needs customer_flows")

    shadow = shadow_transform(network, requests)
    net, reqs = shadow.network, shadow.requests
    edges = net.edges
    M = len(reqs)

    prog = CrrpProgram()
    prog.shadow = shadow
    prog.config = config
    fixed = None
    if config.variant == REBALANCE_FIXED:
        fixed = _lift_customer_flows(shadow, customer_flows)

    for m, r in enumerate(reqs):
        cols = []
        cost_m = 0.0 if config.variant == REBALANCE_FIXED else 1.0
        for e in edges:
            j = prog.add_variable(cost_m * e.free_flow_time, name=f"f{m}[{e.u}>{e.v}]")
            if fixed is not None:
                prog.fix(j, fixed[m].get(e.key, 0.0))
            cols.append(j)
        prog.customer_var.append(cols)

    rho = 1.0 if config.variant == REBALANCE_FIXED else config.rho
    for e in edges:
        j = prog.add_variable(rho * e.free_flow_time, name=f"fR[{e.u}>{e.v}]")
        if config.variant == CUSTOMER_ONLY:
            prog.fix(j, 0.0)
        prog.rebalance_var.append(j)

    if config.relax_congestion:
        c_slack = config.slack_cost if config.slack_cost is not None else default_slack_cost(network, requests)
        for e in edges:
            prog.slack_var.append(prog.add_variable(c_slack, name=f"d[{e.u}>{e.v}]"))

    out_ids = {n: [] for n in net.nodes}
    in_ids = {n: [] for n in net.nodes}
    for k, e in enumerate(edges):
        out_ids[e.u].append(k)
        in_ids[e.v].append(k)

    # per-request conservation: in - out = -rate at origin, +rate at destination
    for m, r in enumerate(reqs):
        cols = prog.customer_var[m]
        for n in net.nodes:
            coeffs: dict[int, float] = {}
            for k in in_ids[n]:
                coeffs[cols[k]] = coeffs.get(cols[k], 0.0) + 1.0
            for k in out_ids[n]:
                coeffs[cols[k]] = coeffs.get(cols[k], 0.0) - 1.0
            rhs = -r.rate if n == r.origin else (r.rate if n == r.dest else 0.0)
            if coeffs or rhs:
                prog.add_constraint(coeffs, "==", rhs, name=f"cons{m}[{n}]")

    # rebalancing balance: in_R - out_R = origin rate - destination rate
    o_rate, d_rate = reqs.origin_rate(), reqs.dest_rate()
    for n in net.nodes if config.variant != CUSTOMER_ONLY else ():
        coeffs = {}
        for k in in_ids[n]:
            coeffs[prog.rebalance_var[k]] = 1.0
        for k in out_ids[n]:
            coeffs[prog.rebalance_var[k]] = coeffs.get(prog.rebalance_var[k], 0.0) - 1.0
        rhs = o_rate.get(n, 0.0) - d_rate.get(n, 0.0)
        if coeffs or rhs:
            prog.add_constraint(coeffs, "==", rhs, name=f"reb[{n}]")

    # capacity
    for k, e in enumerate(edges):
        coeffs = {prog.customer_var[m][k]: 1.0 for m in range(M)}
        coeffs[prog.rebalance_var[k]] = 1.0
        if config.relax_congestion:
            coeffs[prog.slack_var[k]] = -1.0
        prog.add_constraint(coeffs, "<=", e.capacity, name=f"cap[{e.u}>{e.v}]")
    return prog


# ---------------------------------------------------------------------------
# solving


def v_min(network: RoadNetwork, flows: FlowAssignment) -> int:
    """Vehicles needed to sustain ``flows``: ceil of total time-weighted flow.

    Rebalancing flow is counted once (not once per request).
    """
    t = {e.key: e.free_flow_time for e in network.edges}
    total = 0.0
    for fm in flows.customer_flows:
        total += sum(t[k] * x for k, x in fm.items())
    total += sum(t[k] * x for k, x in flows.rebalancing_flow.items())
    return int(math.ceil(total - 1e-9))


def _infeasibility_witness(network: RoadNetwork, requests: RequestSet) -> ConditionReport:
    if len(network.nodes) <= 12:
        return check_cut_conditions(network, requests, "exhaustive")
    return check_cut_conditions(network, requests, "sampled", count=2000, seed=0)


def solve_crrp(
    network: RoadNetwork,
    requests: RequestSet,
    config: CrrpConfig,
    customer_flows: Optional[Sequence[Mapping[EdgeKey, float]]] = None,
) -> CrrpSolution:
    prog = build_crrp(network, requests, config, customer_flows)
    sol = lpmod.solve_lp(prog, method=config.lp_method)
    if sol.status == lpmod.INFEASIBLE:
        witness = _infeasibility_witness(network, requests)
        msg = "no congestion-free flow exists"
        if witness.worst_cut is not None and not witness.passed:
            msg += f" (cut {sorted(witness.worst_cut.s_side)} violates condition {witness.violated_condition})"
        raise CrrpInfeasible(msg, witness)
    if sol.status != lpmod.OPTIMAL:
        raise CrrpNumericalError(f"LP solve failed: {sol.status} {sol.message}")
    return _read_solution(network, prog, sol)


def solve_crrp_spread(
    network: RoadNetwork,
    requests: RequestSet,
    config: CrrpConfig,
) -> CrrpSolution:
    """Relaxed CRRP with overload spread as evenly as the optimum allows.

    A linear slack price is indifferent to where overload lands, so the
    plain optimum may pile it onto one edge. When the first solve needs
    slack, a second LP keeps the objective at its optimum and minimizes the
    largest ``slack(e) / capacity(e)``.
    """
    if not config.relax_congestion:
        raise ValueError("solve_crrp_spread needs relax_congestion=True")
    first = solve_crrp(network, requests, config)
    if first.total_slack <= 0:
        return first
    prog = build_crrp(network, requests, config)
    budget = {j: c for j, c in enumerate(prog.cost) if c}
    original = list(prog.cost)
    for j in budget:
        prog.cost[j] = 0.0
    tol = 1e-9 * max(1.0, abs(first.objective))
    prog.add_constraint(budget, "<=", first.objective + tol, name="objective_budget")
    u = prog.add_variable(1.0, name="peak_overload")
    for e, j in zip(prog.shadow.network.edges, prog.slack_var):
        if prog.shadow.is_original_edge(e.key):
            prog.add_constraint({j: 1.0, u: -e.capacity}, "<=", 0.0, name=f"spread[{e.u}>{e.v}]")
    sol = lpmod.solve_lp(prog, method=config.lp_method)
    if sol.status != lpmod.OPTIMAL:
        raise CrrpNumericalError(f"spread LP failed: {sol.status} {sol.message}")
    out = _read_solution(network, prog, sol)
    out.objective = float(sum(c * sol.x[j] for j, c in enumerate(original) if c))
    return out


def _read_solution(network: RoadNetwork, prog: CrrpProgram, sol: lpmod.LpSolution) -> CrrpSolution:
    shadow = prog.shadow
    edges = shadow.network.edges
    x = sol.x
    customer = []
    for m, cols in enumerate(prog.customer_var):
        fm = {e.key: float(x[j]) for e, j in zip(edges, cols) if x[j] > 0}
        customer.append(_drop_shadow(shadow, fm))
    reb = {e.key: float(x[j]) for e, j in zip(edges, prog.rebalance_var) if x[j] > 0}
    reb = _drop_shadow(shadow, reb)
    slacks = {}
    if prog.slack_var:
        slacks = {e.key: float(x[j]) for e, j in zip(edges, prog.slack_var) if x[j] > 0}
        slacks = _drop_shadow(shadow, slacks)
    flows = FlowAssignment(customer, reb)
    return CrrpSolution(flows, float(sol.objective), slacks, v_min(network, flows), sol.status)


# ---------------------------------------------------------------------------
# verification


@dataclass
class FeasibilityReport:
    max_violation: dict[str, float]
    tolerance: float
    net_flow_residuals: list[float] = field(default_factory=list)
    unknown_edges: list[EdgeKey] = field(default_factory=list)

    def passed(self, *families: str) -> bool:
        names = families or tuple(self.max_violation)
        ok = all(self.max_violation[f] <= self.tolerance for f in names)
        if not families:
            ok = ok and not self.unknown_edges
            ok = ok and all(abs(r) <= self.tolerance for r in self.net_flow_residuals)
        return ok

    @property
    def customer_feasible(self) -> bool:
        return self.passed("nonnegativity", "origin", "destination", "transit", "capacity_customer")

    @property
    def feasible(self) -> bool:
        return self.passed()


FAMILIES = ("nonnegativity", "origin", "destination", "transit", "rebalancing", "capacity", "capacity_customer")


def verify_flows(
    network: RoadNetwork,
    requests: RequestSet,
    flows: FlowAssignment,
    tolerance: float = 1e-8,
    cuts: Iterable[Cut] = (),
) -> FeasibilityReport:
    """Check per-request conservation, rebalancing balance and capacity.

    ``capacity`` covers customer plus rebalancing flow, ``capacity_customer``
    customer flow alone. For each cut in ``cuts`` the residual of the
    net-flow identity ``F_out - F_in = sum(rate, origin in S) - sum(rate,
    destination in S)`` is recorded.
    """
    known = {e.key: e for e in network.edges}
    viol = dict.fromkeys(FAMILIES, 0.0)
    unknown: list[EdgeKey] = []

    def net_balance(flow: Mapping[EdgeKey, float]) -> dict[str, float]:
        bal = dict.fromkeys(network.nodes, 0.0)
        for (u, v), x in flow.items():
            if (u, v) not in known:
                unknown.append((u, v))
                continue
            bal[v] += x
            bal[u] -= x
        return bal

    all_flows = list(flows.customer_flows) + [flows.rebalancing_flow]
    for f in all_flows:
        for x in f.values():
            viol["nonnegativity"] = max(viol["nonnegativity"], -x)

    for r, fm in zip(requests, flows.customer_flows):
        bal = net_balance(fm)  # inflow - outflow
        for n, b in bal.items():
            if n == r.origin:
                viol["origin"] = max(viol["origin"], abs(b + r.rate))
            elif n == r.dest:
                viol["destination"] = max(viol["destination"], abs(b - r.rate))
            else:
                viol["transit"] = max(viol["transit"], abs(b))
    for r in list(requests)[len(flows.customer_flows):]:
        viol["origin"] = max(viol["origin"], r.rate)
        viol["destination"] = max(viol["destination"], r.rate)

    o_rate, d_rate = requests.origin_rate(), requests.dest_rate()
    rbal = net_balance(flows.rebalancing_flow)
    for n, b in rbal.items():
        resid = b + d_rate.get(n, 0.0) - o_rate.get(n, 0.0)
        viol["rebalancing"] = max(viol["rebalancing"], abs(resid))

    cust = flows.customer_total()
    for e in network.edges:
        c = cust.get(e.key, 0.0)
        viol["capacity_customer"] = max(viol["capacity_customer"], c - e.capacity)
        viol["capacity"] = max(viol["capacity"], c + flows.rebalancing_flow.get(e.key, 0.0) - e.capacity)

    residuals = []
    for cut in cuts:
        s = cut.s_side
        f_out = sum(x for (u, v), x in cust.items() if u in s and v not in s)
        f_in = sum(x for (u, v), x in cust.items() if v in s and u not in s)
        expected = sum(r.rate for r in requests if r.origin in s) - sum(r.rate for r in requests if r.dest in s)
        residuals.append(f_out - f_in - expected)

    return FeasibilityReport(viol, tolerance, residuals, sorted(set(unknown)))


# ---------------------------------------------------------------------------
# asymmetry sweep


@dataclass
class SweepRow:
    reduction: float
    mean_time_with_rebalancing: float
    mean_time_without_rebalancing: float
    slack_with: float
    slack_without: float

    @property
    def gap(self) -> float:
        """Relative travel-time increase caused by rebalancing."""
        base = self.mean_time_without_rebalancing
        return (self.mean_time_with_rebalancing - base) / base if base > 0 else 0.0

    @property
    def congested(self) -> bool:
        return self.slack_with > 0 or self.slack_without > 0


@dataclass
class SweepReport:
    rows: list[SweepRow] = field(default_factory=list)

    def to_csv_rows(self) -> list[dict]:
        return [
            {
                "reduction_pct": 100.0 * r.reduction,
                "mean_time_with_reb": r.mean_time_with_rebalancing,
                "mean_time_without_reb": r.mean_time_without_rebalancing,
                "slack_with_reb": r.slack_with,
                "slack_without_reb": r.slack_without,
            }
            for r in self.rows
        ]


def mean_customer_time(
    network: RoadNetwork,
    requests: RequestSet,
    flows: FlowAssignment,
    bpr: BprParams = BprParams(),
) -> float:
    """Rate-weighted mean customer travel time with BPR delays evaluated at
    the total (customer + rebalancing) flow on each edge."""
    total = flows.total_flow()
    delay = {
        e.key: bpr_delay(e.free_flow_time, total.get(e.key, 0.0), e.capacity, bpr) for e in network.edges
    }
    time = sum(delay[k] * x for fm in flows.customer_flows for k, x in fm.items())
    rate = requests.total_rate
    return time / rate if rate > 0 else 0.0


MIN_CAPACITY_FRACTION = 1e-6


def derate(network: RoadNetwork, reduction: float, edge_filter: Callable[[RoadNetwork, Edge], bool]) -> RoadNetwork:
    """Reduce the capacity of the selected edges by ``reduction`` (a
    fraction). A full reduction leaves ``MIN_CAPACITY_FRACTION`` of the
    original so the edge stays in the graph as a nearly closed road."""
    keep = max(1.0 - reduction, MIN_CAPACITY_FRACTION)
    return network.with_capacities(
        {e.key: e.capacity * keep for e in network.edges if edge_filter(network, e)}
    )


def asymmetry_sweep(
    network: RoadNetwork,
    requests: RequestSet,
    reductions: Sequence[float],
    edge_filter: Callable[[RoadNetwork, Edge], bool],
    rho: float = 1.0,
    bpr: BprParams = BprParams(),
    slack_cost: Optional[float] = None,
    lp_method: str = "auto",
) -> SweepReport:
    """Customer travel times with and without rebalancing as selected edges
    are progressively derated."""
    report = SweepReport()
    cost = slack_cost if slack_cost is not None else default_slack_cost(network, requests)
    for red in reductions:
        net = derate(network, red, edge_filter)
        with_cfg = CrrpConfig(rho=rho, relax_congestion=True, slack_cost=cost, variant=JOINT, lp_method=lp_method)
        wo_cfg = CrrpConfig(rho=rho, relax_congestion=True, slack_cost=cost, variant=CUSTOMER_ONLY, lp_method=lp_method)
        with_sol = solve_crrp_spread(net, requests, with_cfg)
        wo_sol = solve_crrp_spread(net, requests, wo_cfg)
        report.rows.append(
            SweepRow(
                reduction=float(red),
                mean_time_with_rebalancing=mean_customer_time(net, requests, with_sol.flows, bpr),
                mean_time_without_rebalancing=mean_customer_time(net, requests, wo_sol.flows, bpr),
                slack_with=with_sol.total_slack,
                slack_without=wo_sol.total_slack,
            )
        )
    return report


def min_peak_utilization(
    network: RoadNetwork,
    requests: RequestSet,
    lp_method: str = "auto",
) -> tuple[float, FlowAssignment]:
    """Smallest peak edge utilization over all customer routings of minimum
    free-flow time, with the routing attaining it.

    Two stages: the uncapacitated customer-only optimum fixes the time
    budget, then the peak ``max_e load(e) / capacity(e)`` is minimized
    within that budget. The second stage removes the arbitrariness of
    ties between equal-time routes.
    """
    roomy = network.with_capacities({e.key: requests.total_rate + 1.0 for e in network.edges})
    cfg = CrrpConfig(variant=CUSTOMER_ONLY, lp_method=lp_method)
    best = solve_crrp(roomy, requests, cfg).objective
    prog = build_crrp(roomy, requests, cfg)
    edges = prog.shadow.network.edges
    budget = {}
    for cols in prog.customer_var:
        for e, j in zip(edges, cols):
            budget[j] = prog.cost[j]
            prog.cost[j] = 0.0
    u = prog.add_variable(1.0, name="peak")
    prog.add_constraint(budget, "<=", best + 1e-9 * max(1.0, abs(best)), name="time_budget")
    caps = {e.key: e.capacity for e in network.edges}
    for k, e in enumerate(edges):
        if not prog.shadow.is_original_edge(e.key):
            continue
        coeffs = {cols[k]: 1.0 for cols in prog.customer_var}
        coeffs[u] = -caps[e.key]
        prog.add_constraint(coeffs, "<=", 0.0, name=f"peak[{e.u}>{e.v}]")
    sol = lpmod.solve_lp(prog, method=lp_method)
    if sol.status != lpmod.OPTIMAL:
        raise CrrpNumericalError(f"peak utilization LP failed: {sol.status}")
    return float(sol.x[u]), _read_solution(network, prog, sol).flows


def calibrate_capacities(
    network: RoadNetwork,
    requests: RequestSet,
    target_utilization: float = 0.95,
    lp_method: str = "auto",
) -> tuple[RoadNetwork, float]:
    """Scale all capacities uniformly so the free-flow-optimal customer
    routing (the least peaked one, see :func:`min_peak_utilization`) loads
    its busiest edge to ``target_utilization``.

    Returns the scaled network and the scale factor applied.
    """
    if not 0 < target_utilization:
        raise ValueError("target utilization must be positive")
    peak, _ = min_peak_utilization(network, requests, lp_method)
    if peak <= 0:
        return network, 1.0
    factor = peak / target_utilization
    return network.scaled(factor), factor


def max_utilization(network: RoadNetwork, flows: FlowAssignment, include_rebalancing: bool = False) -> float:
    load = flows.total_flow() if include_rebalancing else flows.customer_total()
    return max((load.get(e.key, 0.0) / e.capacity for e in network.edges), default=0.0)
