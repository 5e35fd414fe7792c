"""Loaders for OSM XML extracts and trip CSVs."""

from __future__ import annotations

import csv
import io
import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Optional

import numpy as np

from .netgraph import Edge, RoadNetwork
from .simulator import Trip

log = logging.getLogger(__name__)

DEFAULT_WHITELIST = frozenset(
    base + suffix
    for base in ("motorway", "trunk", "primary", "secondary", "tertiary")
    for suffix in ("", "_link")
) | {"residential", "unclassified"}

# (speed km/h, lanes total) per class; edit freely
CLASS_DEFAULTS: dict[str, tuple[float, int]] = {
    "motorway": (100.0, 4),
    "motorway_link": (60.0, 1),
    "trunk": (80.0, 4),
    "trunk_link": (50.0, 1),
    "primary": (60.0, 4),
    "primary_link": (40.0, 1),
    "secondary": (50.0, 2),
    "secondary_link": (40.0, 1),
    "tertiary": (50.0, 2),
    "tertiary_link": (30.0, 1),
    "residential": (30.0, 2),
    "unclassified": (40.0, 2),
}
FALLBACK_DEFAULT = (30.0, 2)
REFERENCE_HEADWAY_S = 23.6
EARTH_RADIUS_M = 6_371_008.8
MPH_TO_KMH = 1.609344


class OsmError(ValueError):
    pass


@dataclass
class OsmWay:
    id: str
    refs: list[str]
    tags: dict[str, str]


@dataclass
class OsmExtract:
    nodes: dict[str, tuple[float, float]]  # id -> (lat, lon)
    ways: list[OsmWay]
    dropped_ways: int = 0


@dataclass
class IngestReport:
    defaulted: dict[str, int] = field(default_factory=dict)
    dropped_rows: int = 0
    bad_rows: int = 0
    skipped: dict[str, int] = field(default_factory=dict)

    def bump(self, table: dict, key: str) -> None:
        table[key] = table.get(key, 0) + 1

    def to_dict(self) -> dict:
        return {
            "defaulted": dict(sorted(self.defaulted.items())),
            "dropped_rows": self.dropped_rows,
            "bad_rows": self.bad_rows,
            "skipped": dict(sorted(self.skipped.items())),
        }


def _byte_offset(data: bytes, line: int, col: int) -> int:
    lines = data.split(b"\n")
    return sum(len(ln) + 1 for ln in lines[: max(0, line - 1)]) + col


def parse_osm(data: bytes, highway_whitelist: Iterable[str] = DEFAULT_WHITELIST) -> OsmExtract:
    """Streaming parse of an OSM XML document.

    Only ways carrying a whitelisted ``highway`` tag are kept; node elements
    are cleared as soon as their coordinates are read, so memory tracks the
    node table plus one way at a time. Ways that reference nodes missing
    from the extract are dropped.
    """
    whitelist = frozenset(highway_whitelist)
    nodes: dict[str, tuple[float, float]] = {}
    ways: list[OsmWay] = []
    raw: list[OsmWay] = []
    try:
        root = None
        for event, el in ET.iterparse(io.BytesIO(data), events=("start", "end")):
            if event == "start":
                if root is None:
                    root = el
                continue
            tag = el.tag
            if tag == "node":
                try:
                    nodes[el.get("id")] = (float(el.get("lat")), float(el.get("lon")))
                except (TypeError, ValueError):
                    log.warning("node %s without usable coordinates", el.get("id"))
                el.clear()
            elif tag == "way":
                tags = {t.get("k"): t.get("v") for t in el.iter("tag")}
                if tags.get("highway") in whitelist:
                    refs = [nd.get("ref") for nd in el.iter("nd")]
                    raw.append(OsmWay(el.get("id"), refs, tags))
                el.clear()
            elif tag == "relation":
                el.clear()
            else:
                continue
            # finished children would otherwise stay attached to the root
            root.clear()
    except ET.ParseError as exc:
        line, col = exc.position
        raise OsmError(f"XML syntax error at byte {_byte_offset(data, line, col)}: {exc}") from None
    dropped = 0
    for w in raw:
        if len(w.refs) < 2 or any(r not in nodes for r in w.refs):
            dropped += 1
            continue
        ways.append(w)
    used = {r for w in ways for r in w.refs}
    return OsmExtract({k: v for k, v in nodes.items() if k in used}, ways, dropped)


_NUM = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*(mph|km/h|kmh|kph)?\s*$")


def parse_maxspeed(value: Optional[str]) -> Optional[float]:
    """km/h from an OSM maxspeed tag; None when absent or unparseable."""
    if value is None:
        return None
    m = _NUM.match(value.split(";")[0])
    if not m:
        return None
    v = float(m.group(1))
    if m.group(2) == "mph":
        v *= MPH_TO_KMH
    return v if v > 0 else None


def parse_lanes(value: Optional[str]) -> Optional[int]:
    if value is None:
        return None
    try:
        n = int(value.split(";")[0].strip())
    except ValueError:
        return None
    return n if n > 0 else None


def oneway_direction(tags: dict[str, str]) -> int:
    """+1 forward only, -1 reverse only, 0 both directions."""
    ow = (tags.get("oneway") or "").strip().lower()
    if ow in ("yes", "true", "1"):
        return 1
    if ow == "-1" or ow == "reverse":
        return -1
    if ow in ("no", "false", "0"):
        return 0
    if tags.get("highway") in ("motorway", "motorway_link") or tags.get("junction") in ("roundabout", "circular"):
        return 1
    return 0


def calibrate_capacity_scale(maxspeed_kmh: float, lanes: int, headway_s: float = REFERENCE_HEADWAY_S) -> float:
    """Scale giving a reference edge one vehicle every ``headway_s`` seconds."""
    if maxspeed_kmh <= 0 or lanes <= 0 or headway_s <= 0:
        raise ValueError("calibration inputs must be positive")
    return 1.0 / (headway_s * maxspeed_kmh * lanes)


def _project(extract: OsmExtract) -> tuple[dict[str, tuple[float, float]], tuple[float, float]]:
    lat = np.array([p[0] for p in extract.nodes.values()])
    lon = np.array([p[1] for p in extract.nodes.values()])
    lat0, lon0 = float(lat.mean()), float(lon.mean())
    return {k: project_point(p[0], p[1], lat0, lon0) for k, p in extract.nodes.items()}, (lat0, lon0)


def project_point(lat: float, lon: float, lat0: float, lon0: float) -> tuple[float, float]:
    """Equirectangular projection to metres about (lat0, lon0)."""
    k = math.pi / 180.0
    return (EARTH_RADIUS_M * (lon - lon0) * k * math.cos(lat0 * k), EARTH_RADIUS_M * (lat - lat0) * k)


def osm_to_network(
    extract: OsmExtract,
    defaults: Optional[dict[str, tuple[float, int]]] = None,
    capacity_scale: float = 1.0,
    report: Optional[IngestReport] = None,
) -> RoadNetwork:
    """Directed road graph with ``capacity = scale * maxspeed_kmh * lanes``.

    Two-way ways get ``ceil(lanes / 2)`` lanes each way unless
    ``lanes:forward``/``lanes:backward`` say otherwise. Parallel segments
    between the same node pair are merged (capacities add, the faster time
    wins). Node ids are the OSM ids.
    """
    if not extract.ways:
        raise OsmError("extract has no usable ways")
    if capacity_scale <= 0:
        raise ValueError("capacity_scale must be positive")
    table = CLASS_DEFAULTS if defaults is None else defaults
    report = report if report is not None else IngestReport()
    xy, projection = _project(extract)
    merged: dict[tuple[str, str], list[float]] = {}

    for w in extract.ways:
        cls = w.tags.get("highway", "")
        d_speed, d_lanes = table.get(cls, FALLBACK_DEFAULT)
        speed = parse_maxspeed(w.tags.get("maxspeed"))
        if speed is None:
            report.bump(report.defaulted, "maxspeed")
            if "maxspeed" in w.tags:
                log.info("way %s: malformed maxspeed %r, using %s", w.id, w.tags["maxspeed"], d_speed)
            speed = d_speed
        lanes = parse_lanes(w.tags.get("lanes"))
        if lanes is None:
            report.bump(report.defaulted, "lanes")
            if "lanes" in w.tags:
                log.info("way %s: malformed lanes %r, using %s", w.id, w.tags["lanes"], d_lanes)
            lanes = d_lanes
        direction = oneway_direction(w.tags)
        if direction == 0:
            fwd = parse_lanes(w.tags.get("lanes:forward")) or math.ceil(lanes / 2)
            bwd = parse_lanes(w.tags.get("lanes:backward")) or math.ceil(lanes / 2)
        else:
            fwd = bwd = lanes
        mps = speed / 3.6
        for a, b in zip(w.refs, w.refs[1:]):
            if a == b:
                report.bump(report.skipped, "self_loop")
                continue
            (xa, ya), (xb, yb) = xy[a], xy[b]
            t = math.hypot(xb - xa, yb - ya) / mps
            legs = []
            if direction >= 0:
                legs.append((a, b, fwd))
            if direction <= 0:
                legs.append((b, a, bwd) if direction == 0 else (b, a, fwd))
            for u, v, ln in legs:
                cap = capacity_scale * speed * ln
                cur = merged.get((u, v))
                if cur is None:
                    merged[(u, v)] = [cap, t]
                else:
                    report.bump(report.skipped, "merged_parallel")
                    cur[0] += cap
                    cur[1] = min(cur[1], t)

    used = sorted({n for k in merged for n in k})
    edges = [Edge(u, v, c, t) for (u, v), (c, t) in sorted(merged.items())]
    return RoadNetwork(used, edges, {n: xy[n] for n in used}, projection)


# ---------------------------------------------------------------------------
# trips

SCHEMAS = ("simple", "nyc_taxi")
NYC_COLUMNS = ("pickup_datetime", "pickup_longitude", "pickup_latitude", "dropoff_longitude", "dropoff_latitude")


class TripFormatError(ValueError):
    pass


def _node_snapper(network: RoadNetwork, radius: float):
    from scipy.spatial import cKDTree

    if not network.has_coords or network.projection is None:
        raise TripFormatError("snapping needs a network with coordinates and a projection")
    ids = list(network.nodes)
    tree = cKDTree(np.array([network.coords[n] for n in ids], dtype=float))
    lat0, lon0 = network.projection

    def snap(lat: float, lon: float) -> Optional[str]:
        d, i = tree.query(project_point(lat, lon, lat0, lon0))
        return ids[int(i)] if d <= radius else None

    return snap


def load_trips_csv(
    data: bytes,
    schema: str = "simple",
    node_snap: Optional[RoadNetwork] = None,
    snap_radius: float = 250.0,
    error_budget: int = 0,
    report: Optional[IngestReport] = None,
) -> list[Trip]:
    """Read trips sorted by arrival time.

    ``simple``: header ``arrival_time_s,origin_node,dest_node``.
    ``nyc_taxi``: pickup timestamp and pickup/dropoff lon/lat; arrival
    times are seconds after the earliest pickup and coordinates snap to
    the nearest node of ``node_snap`` within ``snap_radius`` metres.
    Rows that cannot be parsed count against ``error_budget``.
    """
    if schema not in SCHEMAS:
        raise TripFormatError(f"unknown schema {schema!r}")
    report = report if report is not None else IngestReport()
    reader = csv.DictReader(io.StringIO(data.decode("utf-8-sig")))
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header
    need = ("arrival_time_s", "origin_node", "dest_node") if schema == "simple" else NYC_COLUMNS
    missing = [c for c in need if c not in header]
    if missing:
        raise TripFormatError(f"missing columns for schema {schema}: {missing}")

    def bad(lineno: int, why: str) -> None:
        report.bad_rows += 1
        log.warning("row %d: %s", lineno, why)
        if report.bad_rows > error_budget:
            raise TripFormatError(f"row {lineno}: {why} (error budget {error_budget} exhausted)")

    trips: list[tuple[float, int, str, str]] = []
    if schema == "simple":
        for i, row in enumerate(reader, start=2):
            try:
                t = float(row["arrival_time_s"])
                o, d = row["origin_node"].strip(), row["dest_node"].strip()
                if not math.isfinite(t) or not o or not d:
                    raise ValueError("empty field")
            except (TypeError, ValueError, AttributeError) as exc:
                bad(i, str(exc))
                continue
            if node_snap is not None and (o not in node_snap.index["node"] or d not in node_snap.index["node"]):
                report.dropped_rows += 1
                continue
            if o == d:
                report.dropped_rows += 1
                continue
            trips.append((t, i, o, d))
    else:
        if node_snap is None:
            raise TripFormatError("nyc_taxi schema needs a network to snap to")
        snap = _node_snapper(node_snap, snap_radius)
        stamped = []
        for i, row in enumerate(reader, start=2):
            try:
                ts = datetime.fromisoformat(row["pickup_datetime"].strip())
                plon, plat = float(row["pickup_longitude"]), float(row["pickup_latitude"])
                dlon, dlat = float(row["dropoff_longitude"]), float(row["dropoff_latitude"])
            except (TypeError, ValueError, AttributeError) as exc:
                bad(i, str(exc))
                continue
            o, d = snap(plat, plon), snap(dlat, dlon)
            if o is None or d is None or o == d:
                report.dropped_rows += 1
                continue
            stamped.append((ts, i, o, d))
        if stamped:
            t0 = min(s[0] for s in stamped)
            trips = [((ts - t0).total_seconds(), i, o, d) for ts, i, o, d in stamped]
    trips.sort()
    return [Trip(t, o, d) for t, _, o, d in trips]


def dump_trips_csv(trips: Iterable[Trip]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arrival_time_s", "origin_node", "dest_node"])
    for t in trips:
        w.writerow([repr(float(t.arrival_time)), t.origin, t.dest])
    return buf.getvalue()
