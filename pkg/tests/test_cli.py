import csv
import json

import pytest

from amodflow import cli, ingest, scenarios
from amodflow import netgraph as ng
from amodflow.netgraph import Request, RequestSet

from helpers import two_node


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    return tmp_path


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _run(*argv):
    return cli.cli_dispatch([str(a) for a in argv])


def _load(path):
    return json.loads(path.read_text())


def test_check_symmetry_on_grid(work):
    g = _write(work / "g.json", ng.grid_network(3, 3).to_dict())
    assert _run("check-symmetry", g, "--out", work / "o") == 0
    rep = _load(work / "o" / "symmetry.json")
    assert rep["symmetric"] is True
    man = _load(work / "o" / "manifest.json")
    assert man["subcommand"] == "check-symmetry" and "symmetry.json" in man["outputs"]


def test_solve_crrp_infeasible_and_relaxed(work):
    g = _write(work / "g.json", two_node().to_dict())
    r = _write(work / "r.json", RequestSet([Request("a", "b", 3.0)]).to_dict())
    assert _run("solve-crrp", g, r, "--out", work / "bad") == 1
    sol = _load(work / "bad" / "solution.json")
    assert sol["witness"]["worst_cut"] == ["a"]
    assert _run("solve-crrp", g, r, "--relax", "--out", work / "ok") == 0
    sol = _load(work / "ok" / "solution.json")
    assert sum(e["flow"] for e in sol["slack"]["edges"]) == pytest.approx(2.0)


def test_solve_crrp_feasible(work):
    g = _write(work / "g.json", two_node().to_dict())
    r = _write(work / "r.json", RequestSet([Request("a", "b", 1.0)]).to_dict())
    assert _run("solve-crrp", g, r, "--out", work / "o") == 0
    sol = _load(work / "o" / "solution.json")
    assert sol["v_min"] == 2 and sol["objective"] == pytest.approx(2.0)


def test_input_errors_exit_2(work, capsys):
    assert _run("check-symmetry", "--bogus-flag", "x") == 2
    assert "usage" in capsys.readouterr().err
    assert _run("check-symmetry", work / "missing.json", "--out", work / "o") == 2
    (work / "broken.json").write_text("{not json")
    assert _run("check-symmetry", work / "broken.json", "--out", work / "o") == 2
    assert _run() == 2


def test_cut_conditions(work):
    g = _write(work / "g.json", two_node().to_dict())
    ok = _write(work / "ok.json", RequestSet([Request("a", "b", 1.0)]).to_dict())
    bad = _write(work / "bad.json", RequestSet([Request("a", "b", 3.0)]).to_dict())
    assert _run("cut-conditions", g, ok, "--out", work / "o1") == 0
    assert _run("cut-conditions", g, bad, "--out", work / "o2") == 1


def test_route(work):
    g = _write(work / "g.json", ng.grid_network(2, 2).to_dict())
    loads = _write(work / "l.json", {"loads": [{"from": "0,0", "to": "0,1", "flow": 5.0}]})
    assert _run("route", g, loads, "--origin", "0,0", "--dest", "1,1", "--out", work / "o") == 0
    rep = _load(work / "o" / "route.json")
    assert rep["path"] == ["0,0", "1,0", "1,1"]
    assert _run("route", g, "--origin", "0,0", "--dest", "nope", "--out", work / "o") == 2


def test_rebalance_once(work):
    g = _write(work / "g.json", ng.grid_network(1, 3).to_dict())
    snap = _write(work / "s.json", {
        "regions": [{"id": 0, "anchor": "0,0", "excess": 2, "desired": 0},
                    {"id": 1, "anchor": "0,2", "excess": 0, "desired": 2}],
        "residual": [{"from": "0,0", "to": "0,1", "capacity": 2}, {"from": "0,1", "to": "0,2", "capacity": 1}],
    })
    assert _run("rebalance-once", g, snap, "--out", work / "o") == 0
    assert _load(work / "o" / "paths.json") == [{"path": ["0,0", "0,1", "0,2"], "vehicles": 1}]
    rep = _load(work / "o" / "rebalance.json")
    assert rep["origin_slack"] == {"0": 1}


def _sim_inputs(work):
    net = scenarios.downtown_grid(rows=5, cols=5, block=(2, 2))
    g = _write(work / "g.json", net.to_dict())
    trips = scenarios.imbalanced_trips(net, 40, 600, seed=3)
    t = work / "trips.csv"
    t.write_text(ingest.dump_trips_csv(trips))
    return g, str(t)


def test_simulate_is_byte_identical(work):
    g, t = _sim_inputs(work)
    args = ["simulate", g, t, "--fleet-size", 8, "--duration", 900, "--regions", 3, "--trace"]
    assert _run(*args, "--out", work / "a") == 0
    assert _run(*args, "--out", work / "b") == 0
    for name in ("metrics.json", "trace.csv"):
        assert (work / "a" / name).read_bytes() == (work / "b" / name).read_bytes()
    with open(work / "a" / "trace.csv") as fh:
        assert len(list(csv.DictReader(fh))) > 0


def test_compare_and_replicas(work):
    g, t = _sim_inputs(work)
    assert _run("compare", g, t, "--fleet-size", 8, "--duration", 600, "--regions", 3,
                "--rebalancers", "congestion_aware,none", "--replicas", 2, "--out", work / "o") == 0
    rep = _load(work / "o" / "comparison.json")
    assert len(rep) == 4
    assert (work / "o" / "congested_edges.csv").exists()


def test_sweep(work):
    net = ng.grid_network(3, 3, capacity=1.0)
    g = _write(work / "g.json", net.to_dict())
    r = _write(work / "r.json", RequestSet([Request("0,1", "2,1", 0.5), Request("2,0", "0,2", 0.4)]).to_dict())
    assert _run("sweep-asymmetry", g, r, "--reductions", "0,50", "--out", work / "o") == 2  # --rho required
    assert _run("sweep-asymmetry", g, r, "--reductions", "0,50", "--rho", 1, "--calibrate", 0.95,
                "--out", work / "o") == 0
    with open(work / "o" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(x["reduction_pct"]) for x in rows] == [0.0, 50.0]
    assert set(rows[0]) >= {"reduction_pct", "mean_time_with_reb", "mean_time_without_reb"}


def test_ingest_and_convert(work):
    osm = work / "x.osm"
    osm.write_bytes(
        b'<osm><node id="1" lat="40.0" lon="-73.0"/><node id="2" lat="40.001" lon="-73.0"/>'
        b'<way id="5"><nd ref="1"/><nd ref="2"/><tag k="highway" v="primary"/></way></osm>'
    )
    assert _run("ingest-osm", osm, "--out", work / "o") == 0
    graph = work / "o" / "graph.json"
    assert ng.validate(ng.RoadNetwork.load(graph)) == []
    assert "defaulted" in _load(work / "o" / "ingest_report.json")
    trips = work / "t.csv"
    trips.write_text("pickup_datetime,pickup_longitude,pickup_latitude,dropoff_longitude,dropoff_latitude\n"
                     "2012-03-01 18:00:00,-73.0,40.0,-73.0,40.001\n")
    assert _run("convert-trips", trips, "--graph", graph, "--out", work / "c") == 0
    assert (work / "c" / "trips.csv").read_text().splitlines()[1] == "0.0,1,2"
    (work / "bad.osm").write_bytes(b"<osm><way></osm>")
    assert _run("ingest-osm", work / "bad.osm", "--out", work / "e") == 2


def test_outputs_stay_in_out_dir(work):
    g = _write(work / "g.json", ng.grid_network(2, 2).to_dict())
    before = {p for p in work.rglob("*")}
    assert _run("check-symmetry", g, "--out", work / "only") == 0
    created = {p for p in work.rglob("*")} - before
    assert created and all(p == work / "only" or (work / "only") in p.parents for p in created)


def test_env_var_sets_default_out(work, monkeypatch):
    g = _write(work / "g.json", ng.grid_network(2, 2).to_dict())
    monkeypatch.setenv(cli.OUT_ENV, str(work / "envout"))
    assert _run("check-symmetry", g) == 0
    assert (work / "envout" / "symmetry.json").exists()
