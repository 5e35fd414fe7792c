import pytest

from amodflow import netgraph as ng
from amodflow import scenarios
from amodflow import simulator as sim
from amodflow.rebalance import RegionState
from amodflow.simulator import Regions, SimConfig, Trip


def _line_net():
    return ng.grid_network(1, 4, spacing=110, speed=11)  # 10 s per edge


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(time_step=0)
    with pytest.raises(ValueError):
        SimConfig(time_step=7, rebalance_period=120)
    with pytest.raises(ValueError):
        SimConfig(rebalancer="magic")
    cfg = SimConfig(fleet_size=3, seed=9)
    assert SimConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.vicinity == cfg.rebalance_period


def test_malformed_trips_rejected():
    net = _line_net()
    with pytest.raises(ValueError):
        sim.run(net, [Trip(10, "0,0", "0,1"), Trip(5, "0,0", "0,2")], SimConfig(num_regions=1))
    with pytest.raises(ValueError):
        sim.run(net, [Trip(0, "0,0", "zz")], SimConfig(num_regions=1))
    with pytest.raises(ValueError):
        sim.run(net, [Trip(0, "0,1", "0,1")], SimConfig(num_regions=1))


def test_zero_customers():
    net = ng.grid_network(3, 3)
    res = sim.run(net, [], SimConfig(fleet_size=6, duration=600, num_regions=3))
    m = res.metrics
    assert m.trips_total == 0 and m.trips_completed == 0 and m.mean_wait == 0.0
    assert m.rebalancing_dispatches == 0 and m.mean_rebalancing_vehicles == 0.0


def test_single_trip_hand_traced():
    net = _line_net()
    regions = Regions([0], ["0,0"], [list(net.nodes)])
    cfg = SimConfig(fleet_size=1, duration=120, num_regions=1, rebalancer="none")
    res = sim.run(net, [Trip(0.0, "0,0", "0,3")], cfg, regions)
    c = res.customers[0]
    assert c.pickup - c.arrival == 0.0
    assert abs((c.dropoff - c.pickup) - 30.0) <= cfg.time_step
    m = res.metrics
    assert m.trips_completed == 1 and m.mean_wait == 0.0
    assert m.mean_service == pytest.approx(m.mean_wait + m.mean_travel)


def test_pickup_then_dropoff():
    net = _line_net()
    regions = Regions([0], ["0,0"], [list(net.nodes)])
    cfg = SimConfig(fleet_size=1, duration=300, num_regions=1, rebalancer="none", check_invariants=True)
    res = sim.run(net, [Trip(0.0, "0,2", "0,3")], cfg, regions)
    c = res.customers[0]
    assert abs((c.pickup - c.arrival) - 20.0) <= cfg.time_step
    assert abs((c.dropoff - c.pickup) - 10.0) <= cfg.time_step


def test_unserved_customers_count_their_wait():
    net = _line_net()
    regions = Regions([0], ["0,0"], [list(net.nodes)])
    cfg = SimConfig(fleet_size=0, duration=60, num_regions=1, rebalancer="none")
    res = sim.run(net, [Trip(0.0, "0,0", "0,1")], cfg, regions)
    assert res.metrics.trips_completed == 0
    assert res.metrics.mean_wait == pytest.approx(60.0)
    assert res.metrics.pct_wait_over_5min == 0.0


def _state(excess, desired):
    n = len(excess)
    return RegionState(list(range(n)), [0] * n, [0] * n, [0] * n, [0] * n, list(excess), list(desired))


def test_baseline_examples():
    net = ng.grid_network(1, 3, spacing=100)
    regions = Regions([0, 1, 2], ["0,0", "0,1", "0,2"], [["0,0"], ["0,1"], ["0,2"]])
    assert sim.baseline_p2p_rebalance(_state([2, 0], [0, 2]), Regions([0, 1], ["0,0", "0,2"], [["0,0", "0,1"], ["0,2"]]), net) == [(0, 1, 2)]
    assert sim.baseline_p2p_rebalance(_state([1, 1, 1], [1, 1, 1]), regions, net) == []
    assert sim.baseline_p2p_rebalance(_state([3, 0, 0], [1, 1, 1]), regions, net) == [(0, 1, 1), (0, 2, 1)]


def test_baseline_prefers_cheaper_anchor():
    net = ng.grid_network(1, 3, spacing=100)
    regions = Regions([0, 1, 2], ["0,0", "0,1", "0,2"], [["0,0"], ["0,1"], ["0,2"]])
    # one surplus unit at the middle: both deficits equally far, lowest id wins
    assert sim.baseline_p2p_rebalance(_state([0, 2, 1], [1, 1, 1]), regions, net) == [(1, 0, 1)]
    # one surplus at the west end, deficits at middle and east: middle is nearer
    assert sim.baseline_p2p_rebalance(_state([2, 0, 1], [1, 1, 1]), regions, net) == [(0, 1, 1)]


def test_build_regions_partitions_nodes():
    net = ng.grid_network(5, 5)
    r = sim.build_regions(net, 4, seed=3)
    assert sorted(n for m in r.members for n in m) == sorted(net.nodes)
    assert all(a in m for a, m in zip(r.anchors, r.members))
    assert sim.build_regions(net, 4, seed=3) == r


def _small_scenario():
    net = scenarios.downtown_grid(rows=6, cols=6, capacity=0.3, block=(2, 3))
    trips = scenarios.imbalanced_trips(net, 120, 1800, seed=1)
    return net, trips


def test_deterministic_and_invariants_hold():
    net, trips = _small_scenario()
    for reb in sim.REBALANCERS:
        cfg = SimConfig(fleet_size=12, duration=2100, num_regions=4, rebalancer=reb, check_invariants=True)
        a = sim.run(net, trips, cfg)
        b = sim.run(net, trips, cfg)
        assert a.metrics == b.metrics
        assert [r.congested_edges for r in a.trace] == [r.congested_edges for r in b.trace]
        m = a.metrics
        assert 0 <= m.pct_wait_over_5min <= 100
        assert m.trips_total == len(trips)


def test_rebalancing_serves_at_least_as_many_trips_as_none():
    net, trips = _small_scenario()
    configs = [SimConfig(fleet_size=12, duration=2100, num_regions=4, rebalancer=r) for r in ("none", "congestion_aware")]
    rep = sim.compare(net, trips, configs, names=["none", "ca"])
    none, ca = rep.metrics
    assert ca.trips_completed >= none.trips_completed
    assert set(rep.to_dict()) == {"none", "ca"}
    assert len(rep.congested_series[0]) == len(rep.congested_series[1])


def test_compare_identical_configs_match_and_parallel_matches_serial():
    net, trips = _small_scenario()
    cfg = SimConfig(fleet_size=10, duration=1200, num_regions=4)
    serial = sim.compare(net, trips, [cfg, cfg])
    assert serial.metrics[0] == serial.metrics[1]
    parallel = sim.compare(net, trips, [cfg, cfg], workers=2)
    assert parallel.metrics == serial.metrics
