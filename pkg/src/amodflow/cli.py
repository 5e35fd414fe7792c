"""Command-line front end.

Exit codes: 0 success, 1 infeasible instance, 2 bad input, 3 numerical or
internal failure. Every subcommand writes into ``--out`` (default from
``$AMODFLOW_OUT``, else ``./amodflow_out``) together with ``manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import crrp as crrpmod
from . import ingest, netgraph, rebalance, routing, simulator
from .netgraph import RequestSet, RoadNetwork

OUT_ENV = "AMODFLOW_OUT"
DEFAULT_OUT = "amodflow_out"
EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("amodflow")


class InputError(Exception):
    pass


class Infeasible(Exception):
    pass


# -- canonical output ---------------------------------------------------------


def _canon(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        x = float(f"{x:.12g}")
        return 0.0 if x == 0 else x
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(_canon(obj), sort_keys=True, indent=2) + "\n"


def _csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


@dataclass
class RunManifest:
    subcommand: str
    inputs: list[str]
    overrides: dict
    seed: Optional[int]
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    outputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "inputs": self.inputs,
            "overrides": self.overrides,
            "seed": self.seed,
            "version": self.version,
            "timestamp": self.timestamp,
            "outputs": sorted(self.outputs),
        }


class Output:
    def __init__(self, directory: Path, manifest: RunManifest):
        self.dir = directory
        self.manifest = manifest

    def write(self, name: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        path.write_text(text)
        self.manifest.outputs.append(name)
        return path

    def json(self, name: str, obj) -> Path:
        return self.write(name, canonical_json(obj))

    def close(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "manifest.json").write_text(canonical_json(self.manifest.to_dict()))


# -- input helpers --------------------------------------------------------------


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None


def load_graph(path: str) -> RoadNetwork:
    try:
        net = RoadNetwork.from_dict(_read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed graph ({exc})") from None
    problems = netgraph.validate(net)
    if problems:
        raise InputError(f"{path}: " + "; ".join(problems))
    return net


def load_requests(path: str, net: RoadNetwork) -> RequestSet:
    try:
        reqs = RequestSet.from_dict(_read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed requests ({exc})") from None
    problems = netgraph.validate_requests(net, reqs)
    if problems:
        raise InputError(f"{path}: " + "; ".join(problems))
    return reqs


def load_trips(path: str, net: RoadNetwork) -> list[simulator.Trip]:
    try:
        return ingest.load_trips_csv(_read_bytes(path), "simple", node_snap=None)
    except ingest.TripFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


def _edge_list(flow: dict) -> list[dict]:
    return [{"from": u, "to": v, "flow": x} for (u, v), x in sorted(flow.items())]


def _cut_dict(report: netgraph.ConditionReport) -> dict:
    return {
        "passed": report.passed,
        "cuts_checked": report.cuts_checked,
        "worst_cut": sorted(report.worst_cut.s_side) if report.worst_cut is not None else None,
        "worst_margin": report.worst_margin,
        "violated_condition": report.violated_condition,
    }


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


# -- subcommands ------------------------------------------------------------------


def cmd_check_symmetry(args, out: Output) -> int:
    net = load_graph(args.graph)
    ok, worst = netgraph.is_capacity_symmetric(net, args.tolerance)
    report = {"symmetric": ok, "worst_node_imbalance": worst, "tolerance": args.tolerance}
    if args.samples > 0:
        mean, std = netgraph.sample_disparity(net, args.samples, args.seed)
        report.update(disparity_mean=mean, disparity_std=std, samples=args.samples)
    out.json("symmetry.json", report)
    print(f"symmetric={str(ok).lower()} worst_node_imbalance={worst:.6g}")
    return EXIT_OK


def cmd_cut_conditions(args, out: Output) -> int:
    net = load_graph(args.graph)
    reqs = load_requests(args.requests, net)
    if args.mode == "exhaustive" and len(net.nodes) > netgraph.EXHAUSTIVE_CUT_LIMIT:
        raise InputError(f"exhaustive mode allows at most {netgraph.EXHAUSTIVE_CUT_LIMIT} nodes")
    rep = netgraph.check_cut_conditions(net, reqs, args.mode, count=args.count, seed=args.seed)
    out.json("cut_conditions.json", _cut_dict(rep))
    print(f"passed={str(rep.passed).lower()} cuts_checked={rep.cuts_checked}")
    return EXIT_OK if rep.passed else EXIT_INFEASIBLE


def cmd_solve_crrp(args, out: Output) -> int:
    net = load_graph(args.graph)
    reqs = load_requests(args.requests, net)
    cfg = crrpmod.CrrpConfig(rho=args.rho, relax_congestion=args.relax, slack_cost=args.slack_cost,
                             variant=args.variant, lp_method=args.lp_method)
    try:
        sol = crrpmod.solve_crrp(net, reqs, cfg)
    except crrpmod.CrrpInfeasible as exc:
        out.json("solution.json", {"status": "infeasible", "message": str(exc), "witness": _cut_dict(exc.witness)})
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    body = {
        "status": "optimal",
        "objective": sol.objective,
        "v_min": sol.v_min,
        "customer_flows": [
            {"origin": r.origin, "dest": r.dest, "rate": r.rate, "edges": _edge_list(fm)}
            for r, fm in zip(reqs.requests, sol.flows.customer_flows)
        ],
        "rebalancing_flow": _edge_list(sol.flows.rebalancing_flow),
        "slack": {"total": sol.total_slack, "edges": _edge_list(sol.slacks)},
    }
    out.json("solution.json", body)
    print(f"objective={sol.objective:.12g} v_min={sol.v_min} slack={sol.total_slack:.6g}")
    return EXIT_OK


def parse_snapshot(data: dict) -> rebalance.RebalanceInstance:
    try:
        regions = sorted(data["regions"], key=lambda r: r["id"])
        residual = {(e["from"], e["to"]): int(e["capacity"]) for e in data.get("residual", [])}
        return rebalance.RebalanceInstance(
            region_ids=[r["id"] for r in regions],
            anchors=[str(r["anchor"]) for r in regions],
            excess=[int(r["excess"]) for r in regions],
            desired=[int(r["desired"]) for r in regions],
            residual=residual,
            slack_cost=data.get("slack_cost"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed snapshot ({exc})") from None


def cmd_rebalance_once(args, out: Output) -> int:
    net = load_graph(args.graph)
    inst = parse_snapshot(_read_json(args.snapshot))
    for a in inst.anchors:
        if a not in net.index["node"]:
            raise InputError(f"anchor {a!r} is not a graph node")
    res = rebalance.solve_realtime_rebalance(inst, net)
    paths = rebalance.flow_decompose(res.flow).paths
    out.json("paths.json", [{"path": list(p), "vehicles": k} for p, k in paths])
    out.json("rebalance.json", {
        "objective": res.objective,
        "flow": _edge_list(res.flow),
        "origin_slack": {str(k): v for k, v in res.origin_slack.items()},
        "dest_slack": {str(k): v for k, v in res.dest_slack.items()},
    })
    print(f"paths={len(paths)} vehicles={sum(k for _, k in paths)} slack={res.total_slack}")
    return EXIT_OK


def cmd_route(args, out: Output) -> int:
    net = load_graph(args.graph)
    loads = {}
    if args.loads:
        try:
            loads = {(e["from"], e["to"]): float(e["flow"]) for e in _read_json(args.loads)["loads"]}
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed loads ({exc})") from None
    for n in (args.origin, args.dest):
        if n not in net.index["node"]:
            raise InputError(f"unknown node {n!r}")
    params = routing.BprParams(args.alpha, args.beta)
    try:
        path, t = routing.astar_route(net, loads, params, args.origin, args.dest,
                                      routing.Heuristic(net, args.heuristic))
    except routing.NoRouteError as exc:
        out.json("route.json", {"path": None, "time": None, "message": str(exc)})
        print(str(exc))
        return EXIT_INFEASIBLE
    out.json("route.json", {"path": path, "time": t})
    print(" -> ".join(path))
    print(f"time={t:.12g}")
    return EXIT_OK


def _sim_config(args) -> simulator.SimConfig:
    base = simulator.SimConfig().to_dict()
    if args.config:
        base.update(_read_json(args.config))
    for key in ("time_step", "rebalance_period", "t_vicinity", "fleet_size", "rebalancer", "seed", "duration",
                "capacity_multiplier", "num_regions", "initial_placement", "residual_mode"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    try:
        return simulator.SimConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad simulation config ({exc})") from None


TRACE_COLUMNS = ("clock", "waiting", "in_progress", "congested_edges", "rebalancing")


def cmd_simulate(args, out: Output) -> int:
    net = load_graph(args.graph)
    trips = load_trips(args.trips, net)
    cfg = _sim_config(args)
    out.manifest.seed = cfg.seed
    out.manifest.overrides["config"] = cfg.to_dict()
    try:
        res = simulator.run(net, trips, cfg)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out.json("metrics.json", res.metrics.to_dict())
    if args.trace:
        out.write("trace.csv", _csv_text([vars(r) for r in res.trace], TRACE_COLUMNS))
    m = res.metrics
    print(f"completed={m.trips_completed}/{m.trips_total} mean_wait={m.mean_wait:.1f}s "
          f"mean_service={m.mean_service:.1f}s rebalancing={m.mean_rebalancing_vehicles:.2f}")
    return EXIT_OK


def replica_seeds(master: int, replicas: int) -> list[int]:
    """Independent per-replica seeds derived from the master seed."""
    return [int(s) for s in np.random.SeedSequence(master).generate_state(replicas)]


def cmd_compare(args, out: Output) -> int:
    net = load_graph(args.graph)
    trips = load_trips(args.trips, net)
    base = _sim_config(args)
    out.manifest.seed = base.seed
    kinds = [k.strip() for k in args.rebalancers.split(",") if k.strip()]
    seeds = [base.seed] if args.replicas <= 1 else replica_seeds(base.seed, args.replicas)
    configs, names = [], []
    try:
        for s in seeds:
            for k in kinds:
                configs.append(simulator.SimConfig.from_dict({**base.to_dict(), "rebalancer": k, "seed": s}))
                names.append(k if len(seeds) == 1 else f"{k}@{s}")
    except ValueError as exc:
        raise InputError(str(exc)) from None
    report = simulator.compare(net, trips, configs, names, workers=args.workers)
    out.json("comparison.json", report.to_dict())
    rows = []
    for name, series in zip(report.names, report.congested_series):
        rows += [{"config": name, "step": i, "congested_edges": c} for i, c in enumerate(series)]
    out.write("congested_edges.csv", _csv_text(rows, ("config", "step", "congested_edges")))
    for name, m in zip(report.names, report.metrics):
        print(f"{name}: completed={m.trips_completed} mean_wait={m.mean_wait:.1f}s "
              f"rebalancing={m.mean_rebalancing_vehicles:.2f}")
    return EXIT_OK


SWEEP_COLUMNS = ("reduction_pct", "mean_time_with_reb", "mean_time_without_reb", "slack_with_reb", "slack_without_reb")


def cmd_sweep_asymmetry(args, out: Output) -> int:
    net = load_graph(args.graph)
    reqs = load_requests(args.requests, net)
    if args.calibrate is not None:
        net, factor = crrpmod.calibrate_capacities(net, reqs, args.calibrate, lp_method=args.lp_method)
        out.manifest.overrides["calibration_factor"] = factor
    if not net.has_coords:
        raise InputError("directional derating needs node coordinates")
    reductions = [p / 100.0 for p in _floats(args.reductions)]
    if any(not 0 <= r <= 1 for r in reductions):
        raise InputError("reductions must lie in [0, 100] percent")
    rep = crrpmod.asymmetry_sweep(net, reqs, reductions, netgraph.bearing_filter(args.bearing, args.half_width),
                                  rho=args.rho, lp_method=args.lp_method)
    rows = rep.to_csv_rows()
    out.write("sweep.csv", _csv_text(rows, SWEEP_COLUMNS))
    out.json("sweep.json", rows)
    for r in rows:
        print(f"{r['reduction_pct']:5.1f}% with={r['mean_time_with_reb']:.4g} without={r['mean_time_without_reb']:.4g}")
    return EXIT_OK


def cmd_ingest_osm(args, out: Output) -> int:
    try:
        extract = ingest.parse_osm(_read_bytes(args.osm))
    except ingest.OsmError as exc:
        raise InputError(str(exc)) from None
    scale = args.capacity_scale
    if scale is None:
        scale = ingest.calibrate_capacity_scale(args.reference_speed, args.reference_lanes)
    report = ingest.IngestReport()
    try:
        net = ingest.osm_to_network(extract, capacity_scale=scale, report=report)
    except ingest.OsmError as exc:
        raise InputError(str(exc)) from None
    out.json("graph.json", net.to_dict())
    body = report.to_dict()
    body.update(nodes=len(net.nodes), edges=len(net.edges), dropped_ways=extract.dropped_ways, capacity_scale=scale)
    if args.samples > 0:
        mean, std = netgraph.sample_disparity(net, args.samples, args.seed)
        body.update(disparity_mean=mean, disparity_std=std)
    out.json("ingest_report.json", body)
    print(f"nodes={len(net.nodes)} edges={len(net.edges)}")
    return EXIT_OK


def cmd_convert_trips(args, out: Output) -> int:
    net = load_graph(args.graph) if args.graph else None
    report = ingest.IngestReport()
    try:
        trips = ingest.load_trips_csv(_read_bytes(args.csv), args.schema, node_snap=net,
                                      snap_radius=args.snap_radius, error_budget=args.error_budget, report=report)
    except ingest.TripFormatError as exc:
        raise InputError(str(exc)) from None
    out.write("trips.csv", ingest.dump_trips_csv(trips))
    body = report.to_dict()
    body["trips"] = len(trips)
    out.json("convert_report.json", body)
    print(f"trips={len(trips)} dropped={report.dropped_rows} bad={report.bad_rows}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amodflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-symmetry", parents=[common], help="node-level capacity symmetry and cut disparity")
    s.add_argument("graph")
    s.add_argument("--tolerance", type=float, default=netgraph.DEFAULT_SYMMETRY_TOLERANCE)
    s.add_argument("--samples", type=int, default=1000, help="random cuts for disparity (0 to skip)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_check_symmetry)

    s = sub.add_parser("cut-conditions", parents=[common], help="check demand against every cut")
    s.add_argument("graph")
    s.add_argument("requests")
    s.add_argument("--mode", choices=("exhaustive", "sampled"), default="exhaustive")
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_cut_conditions)

    s = sub.add_parser("solve-crrp", parents=[common], help="congestion-free routing and rebalancing LP")
    s.add_argument("graph")
    s.add_argument("requests")
    s.add_argument("--rho", type=float, default=1.0)
    s.add_argument("--relax", action="store_true", help="allow priced capacity violations")
    s.add_argument("--slack-cost", type=float, default=None)
    s.add_argument("--variant", choices=crrpmod.VARIANTS[:2], default=crrpmod.JOINT)
    s.add_argument("--lp-method", choices=("auto", "dense", "highs"), default="auto")
    s.set_defaults(func=cmd_solve_crrp)

    s = sub.add_parser("rebalance-once", parents=[common], help="one region-level rebalancing round")
    s.add_argument("graph")
    s.add_argument("snapshot")
    s.set_defaults(func=cmd_rebalance_once)

    s = sub.add_parser("route", parents=[common], help="minimum-time route under BPR delays")
    s.add_argument("graph")
    s.add_argument("loads", nargs="?", default=None)
    s.add_argument("--origin", required=True)
    s.add_argument("--dest", required=True)
    s.add_argument("--heuristic", choices=("free_flow", "euclidean", "zero"), default="free_flow")
    s.add_argument("--alpha", type=float, default=0.15)
    s.add_argument("--beta", type=float, default=4.0)
    s.set_defaults(func=cmd_route)

    def sim_flags(s):
        s.add_argument("graph")
        s.add_argument("trips")
        s.add_argument("--config", default=None, help="JSON file with SimConfig fields")
        s.add_argument("--time-step", dest="time_step", type=float)
        s.add_argument("--rebalance-period", dest="rebalance_period", type=float)
        s.add_argument("--t-vicinity", dest="t_vicinity", type=float)
        s.add_argument("--fleet-size", dest="fleet_size", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--duration", type=float)
        s.add_argument("--capacity-multiplier", dest="capacity_multiplier", type=float)
        s.add_argument("--regions", dest="num_regions", type=int)
        s.add_argument("--placement", dest="initial_placement", choices=("balanced", "random"))
        s.add_argument("--residual-mode", dest="residual_mode", choices=("horizon", "occupancy"))

    s = sub.add_parser("simulate", parents=[common], help="run the fleet simulator")
    sim_flags(s)
    s.add_argument("--rebalancer", choices=simulator.REBALANCERS)
    s.add_argument("--trace", action="store_true", help="also write trace.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("compare", parents=[common], help="simulate several rebalancers on the same trips")
    sim_flags(s)
    s.add_argument("--rebalancers", default="congestion_aware,baseline_p2p,none")
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep-asymmetry", parents=[common], help="travel time vs directional capacity loss")
    s.add_argument("graph")
    s.add_argument("requests")
    s.add_argument("--reductions", default="0,10,20,30,40,50,60,70,80,90,100", help="percent values")
    s.add_argument("--bearing", type=float, default=0.0, help="derated direction in degrees (0 = north)")
    s.add_argument("--half-width", type=float, default=45.0)
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--calibrate", type=float, default=None, help="target max utilization, e.g. 0.95")
    s.add_argument("--lp-method", choices=("auto", "dense", "highs"), default="auto")
    s.set_defaults(func=cmd_sweep_asymmetry)

    s = sub.add_parser("ingest-osm", parents=[common], help="OSM XML extract to graph JSON")
    s.add_argument("osm")
    s.add_argument("--capacity-scale", type=float, default=None)
    s.add_argument("--reference-speed", type=float, default=40.0, help="km/h of the calibration edge")
    s.add_argument("--reference-lanes", type=int, default=1)
    s.add_argument("--samples", type=int, default=0, help="random cuts for disparity (0 to skip)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_ingest_osm)

    s = sub.add_parser("convert-trips", parents=[common], help="trip CSV to the simple schema")
    s.add_argument("csv")
    s.add_argument("--schema", choices=ingest.SCHEMAS, default="nyc_taxi")
    s.add_argument("--graph", default=None)
    s.add_argument("--snap-radius", type=float, default=250.0)
    s.add_argument("--error-budget", type=int, default=0)
    s.set_defaults(func=cmd_convert_trips)
    return p


_INPUT_ARGS = ("graph", "requests", "snapshot", "loads", "trips", "osm", "csv", "config")


def cli_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    inputs = [getattr(args, k) for k in _INPUT_ARGS if getattr(args, k, None)]
    overrides = {k: v for k, v in sorted(vars(args).items())
                 if k not in _INPUT_ARGS + ("func", "command", "out", "verbose") and v is not None}
    manifest = RunManifest(args.command, inputs, overrides, getattr(args, "seed", None))
    out = Output(out_dir, manifest)
    try:
        code = args.func(args, out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except (crrpmod.CrrpNumericalError, rebalance.RebalanceError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    manifest.overrides["exit_code"] = code
    out.close()
    return code


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
