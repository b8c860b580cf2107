import json
import math

import numpy as np
import pytest

from hubfleet.scenario import (Center, DistanceMetric, Scenario, ScenarioError,
                               Warehouse, demand_fractions, load_scenario,
                               rate_function, save_scenario, scenario_from_dict,
                               scenario_to_dict)


def _warehouse(**kw):
    base = dict(id=2, position=(1.0, 2.0), demand_per_day=3.0, servers=1,
                unload_rate_per_hour=2.0)
    base.update(kw)
    return Warehouse(**base)


def test_bundled_towns_shape(towns_log, towns_pro):
    assert towns_log.num_stations == 13
    assert towns_log.total_demand_per_day == 66.0
    assert towns_pro.total_demand_per_day == 81.0
    assert [w.id for w in towns_log.warehouses] == list(range(2, 14))
    # the two demand rows share every position
    assert towns_log.warehouse_positions == towns_pro.warehouse_positions
    assert towns_log.warehouse_positions[0] == (10.0, 10.0)
    assert towns_log.warehouse_positions[-1] == (80.0, 180.0)


def test_demand_fractions_sum_to_one(towns_log, towns_pro):
    for sc in (towns_log, towns_pro):
        rho = demand_fractions(sc)
        assert all(r > 0 for r in rho)
        assert abs(sum(rho) - 1.0) <= 1e-12


def test_demand_fractions_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(25):
        n = int(rng.integers(1, 9))
        whs = tuple(
            _warehouse(id=2 + i, demand_per_day=float(rng.uniform(0.01, 50)))
            for i in range(n)
        )
        sc = Scenario(warehouses=whs, center=Center(1, 1.0), truck_speed_kmh=1.0)
        assert abs(sum(demand_fractions(sc)) - 1.0) <= 1e-12


def test_rate_function_saturates(towns_log):
    mu1 = rate_function(towns_log, 1)
    assert mu1(0) == 0.0
    assert mu1(1) == 4.0
    assert mu1(3) == 4.0  # single loading dock
    mu2 = rate_function(towns_log, 2)
    assert mu2(1) == 2.0
    assert mu2(5) == 2.0


def test_rate_function_multi_server():
    sc = Scenario(
        warehouses=(_warehouse(servers=3, unload_rate_per_hour=2.0),),
        center=Center(servers=2, load_rate_per_hour=4.0),
        truck_speed_kmh=1.0)
    mu = rate_function(sc, 2)
    assert [mu(n) for n in range(6)] == [0.0, 2.0, 4.0, 6.0, 6.0, 6.0]
    mu1 = rate_function(sc, 1)
    assert [mu1(n) for n in range(4)] == [0.0, 4.0, 8.0, 8.0]


def test_rate_function_unknown_node(towns_log):
    with pytest.raises(ScenarioError, match="unknown node"):
        rate_function(towns_log, 99)


def test_zero_demand_rejected():
    with pytest.raises(ScenarioError, match="demand must be positive"):
        _warehouse(demand_per_day=0.0)
    with pytest.raises(ScenarioError, match="demand must be positive"):
        _warehouse(demand_per_day=-1.0)
    with pytest.raises(ScenarioError, match="demand must be positive"):
        _warehouse(demand_per_day=float("nan"))


def test_field_validation_messages():
    with pytest.raises(ScenarioError, match="servers"):
        _warehouse(servers=0)
    with pytest.raises(ScenarioError, match="unload_rate_per_hour"):
        _warehouse(unload_rate_per_hour=0.0)
    with pytest.raises(ScenarioError, match="id"):
        _warehouse(id=1)
    with pytest.raises(ScenarioError, match="truck_speed_kmh"):
        Scenario(warehouses=(_warehouse(),), center=Center(1, 1.0),
                 truck_speed_kmh=0.0)
    with pytest.raises(ScenarioError, match="distinct"):
        Scenario(warehouses=(_warehouse(), _warehouse()),
                 center=Center(1, 1.0), truck_speed_kmh=1.0)


def test_defaults_applied():
    sc = scenario_from_dict({
        "warehouses": [{"id": 2, "x": 0.0, "y": 1.0, "demand_per_day": 2.0,
                        "unload_rate_per_hour": 1.5}],
        "center": {"load_rate_per_hour": 3.0},
        "truck_speed_kmh": 40.0,
    })
    assert sc.truck_capacity == 1.0
    assert sc.hours_per_day == 24.0
    assert sc.max_trucks == 100
    assert sc.center.servers == 1
    assert sc.center.location is None
    assert sc.warehouses[0].servers == 1


def test_roundtrip_identity(tmp_path, towns_log):
    path = tmp_path / "copy.json"
    save_scenario(towns_log, path)
    assert load_scenario(path) == towns_log

    with_loc = towns_log.with_center_location((120.0, 90.0))
    save_scenario(with_loc, path)
    again = load_scenario(path)
    assert again == with_loc
    assert again.center.location == (120.0, 90.0)


def test_to_dict_schema(towns_log):
    d = scenario_to_dict(towns_log)
    assert set(d) == {"warehouses", "center", "truck_speed_kmh",
                      "truck_capacity", "hours_per_day", "max_trucks"}
    assert set(d["warehouses"][0]) == {"id", "x", "y", "demand_per_day",
                                       "servers", "unload_rate_per_hour"}
    assert "location" not in d["center"]  # only written when set


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError, match="JSON"):
        load_scenario(bad)
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"warehouses": [], "center": {}, "truck_speed_kmh": 1}))
    with pytest.raises(ScenarioError, match="warehouses"):
        load_scenario(empty)


def test_metric_kinds():
    m = DistanceMetric()
    assert m.distance((0.0, 0.0), (3.0, 4.0)) == 5.0
    manhattan = DistanceMetric(kind="callback",
                               fn=lambda a, x: abs(a[0] - x[0]) + abs(a[1] - x[1]))
    assert manhattan.distance((0.0, 0.0), (3.0, 4.0)) == 7.0
    with pytest.raises(ScenarioError, match="metric"):
        DistanceMetric(kind="chebyshev")
    with pytest.raises(ScenarioError, match="callback"):
        DistanceMetric(kind="callback")


def test_metric_zero_at_anchor():
    m = DistanceMetric()
    p = (12.34, -5.6)
    assert m.distance(p, p) == 0.0
