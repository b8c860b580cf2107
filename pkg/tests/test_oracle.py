import math

import numpy as np
import pytest

from hubfleet.convolution import buzen_convolve, node_throughputs, throughput
from hubfleet.oracle import (ctmc_throughput, enumerate_product_form,
                             random_scenario, run_validation_suite, simulate)
from hubfleet.star import AggregatedConvolution, build_star, explicit_network
from hubfleet.weber import WeberProblem, solve_weber


def test_enumeration_two_station_frozen():
    from hubfleet.convolution import multi_server
    stations = (multi_server("a", 1.0), multi_server("b", 1.0))
    en = enumerate_product_form(stations, [0.5, 0.5], 2)
    assert en.state_count == 3
    assert en.norm_constant == pytest.approx(0.75, rel=1e-14)
    assert np.allclose(sorted(en.probabilities), [1/3, 1/3, 1/3], atol=1e-14)
    assert np.allclose(en.marginal(0), [1/3, 1/3, 1/3], atol=1e-14)


def test_enumeration_state_space_guard():
    from hubfleet.convolution import multi_server
    stations = tuple(multi_server(f"s{i}", 1.0) for i in range(8))
    with pytest.raises(ValueError, match="too large"):
        enumerate_product_form(stations, [1.0] * 8, 200)


def test_ctmc_two_station_uniform():
    from hubfleet.convolution import ClosedNetwork, multi_server
    stations = (multi_server("a", 1.0), multi_server("b", 1.0))
    net = ClosedNetwork(stations, np.array([[0.0, 1.0], [1.0, 0.0]]), 2)
    res = ctmc_throughput(net)
    assert res.residual < 1e-10
    assert np.allclose(res.pi, [1/3, 1/3, 1/3], atol=1e-12)
    assert np.allclose(res.station_throughput, [2/3, 2/3], atol=1e-12)


def test_triple_agreement_star(toy_star_scenario):
    star = build_star(toy_star_scenario, (0.0, 0.0))
    net, eta = explicit_network(star, 2)
    table = buzen_convolve(net, eta)
    en = enumerate_product_form(net, eta)
    ct = ctmc_throughput(net)
    assert table.value(2) == pytest.approx(en.norm_constant, rel=1e-12)
    assert np.allclose(ct.station_throughput, node_throughputs(table, eta),
                       rtol=1e-10, atol=1e-14)


def test_des_zero_trucks(toy_star_scenario):
    star = build_star(toy_star_scenario, (0.0, 0.0))
    est = simulate(star, 0, horizon_events=1000, replications=3, seed=1)
    assert est.warehouse_throughput == 0.0
    assert np.all(est.per_replication == 0.0)


def test_des_bit_identical_reruns(toy_star_scenario):
    star = build_star(toy_star_scenario, (0.0, 0.0))
    a = simulate(star, 2, horizon_events=5000, replications=3, seed=42)
    b = simulate(star, 2, horizon_events=5000, replications=3, seed=42)
    assert np.array_equal(a.per_replication, b.per_replication)
    assert np.array_equal(a.station_sojourn, b.station_sojourn)
    c = simulate(star, 2, horizon_events=5000, replications=3, seed=43)
    assert not np.array_equal(a.per_replication, c.per_replication)


def test_des_single_truck_exact_cycle(toy_star_scenario):
    # one truck never queues: cycle mean 4 hours, TH_w = 1/4 per hour
    star = build_star(toy_star_scenario, (0.0, 0.0))
    est = simulate(star, 1, horizon_events=40_000, replications=10, seed=7)
    assert abs(est.warehouse_throughput - 0.25) <= 2 * est.warehouse_throughput_hw
    # with deterministic travel the cycle still averages 4 hours
    det = simulate(star, 1, horizon_events=40_000, replications=10, seed=7,
                   travel="deterministic")
    assert abs(det.warehouse_throughput - 0.25) <= 2 * det.warehouse_throughput_hw


def test_des_matches_analytic_and_insensitivity():
    rng = np.random.default_rng(19)
    sc = random_scenario(rng, 2, radius_range=(1.0, 3.0))
    star = build_star(sc, (0.0, 0.0))
    analytic = AggregatedConvolution(star).warehouse_throughput(4)
    exp = simulate(star, 4, horizon_events=150_000, replications=10, seed=3,
                   warmup_fraction=0.3)
    det = simulate(star, 4, horizon_events=150_000, replications=10, seed=3,
                   travel="deterministic", warmup_fraction=0.3)
    assert abs(exp.warehouse_throughput - analytic) <= exp.warehouse_throughput_hw
    assert abs(det.warehouse_throughput - analytic) <= \
        det.warehouse_throughput_hw + 0.001 * analytic
    assert abs(exp.warehouse_throughput - det.warehouse_throughput) <= \
        exp.warehouse_throughput_hw + det.warehouse_throughput_hw


def test_des_user_travel_distribution(toy_star_scenario):
    # uniform(0, 2*mean) has the same mean: insensitivity again
    star = build_star(toy_star_scenario, (0.0, 0.0))

    def uniform_travel(rng, mean):
        return rng.uniform(0.0, 2.0 * mean)

    est = simulate(star, 3, horizon_events=80_000, replications=8, seed=5,
                   travel=uniform_travel)
    analytic = AggregatedConvolution(star).warehouse_throughput(3)
    assert abs(est.warehouse_throughput - analytic) <= \
        2.5 * est.warehouse_throughput_hw
    assert est.travel == "callable"


def test_des_little_law_closure():
    rng = np.random.default_rng(29)
    sc = random_scenario(rng, 3, radius_range=(0.5, 2.0))
    star = build_star(sc, (0.0, 0.0))
    n = 5
    est = simulate(star, n, horizon_events=200_000, replications=6, seed=11)
    # visit ratios over the explicit stations: hub 1/4, each warehouse leg rho/4
    eta = [0.25]
    for r in star.rho:
        eta += [r / 4.0, r / 4.0, r / 4.0]
    th_overall = 4.0 * est.warehouse_throughput
    lhs = float(np.dot(eta, est.station_sojourn))
    assert lhs * th_overall == pytest.approx(n, rel=0.02)


def test_des_station_throughput_balance(toy_star_scenario):
    # flow balance: hub and dock complete at the same rate, lanes too
    star = build_star(toy_star_scenario, (0.0, 0.0))
    est = simulate(star, 2, horizon_events=100_000, replications=5, seed=13)
    th = est.station_throughput
    assert th[0] == pytest.approx(th[2], rel=0.01)   # hub vs dock
    assert th[1] == pytest.approx(th[3], rel=0.01)   # lane out vs lane back


def test_validation_suite_passes():
    results = run_validation_suite(seed=2, instances=3, des_events=30_000,
                                   des_replications=6)
    for r in results:
        assert r.passed, f"{r.name}: {r.detail}"
    names = [r.name for r in results]
    assert "enumeration vs convolution" in names
    assert "ctmc vs convolution" in names
    assert "travel-time insensitivity (DES)" in names


def test_validation_suite_corruption_detected():
    results = run_validation_suite(seed=2, instances=2, des_events=20_000,
                                   des_replications=4, corrupt_convolution=True)
    bad = [r for r in results if not r.passed]
    assert len(bad) == 1
    assert bad[0].name == "log/linear convolution agreement"
    assert "disagree" in bad[0].detail
