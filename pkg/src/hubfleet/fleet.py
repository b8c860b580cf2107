"""Fleet sizing and hub placement on top of the star-network analysis.

Feasibility compares deliverable truckloads per day against daily demand:
a fleet of N trucks meets demand when

    capacity * TH_w(N) * hours_per_day >= total demand per day.

Warehouse throughput TH_w(N) rises strictly with N but never reaches the
saturation ceiling min(mu_1 s_1, min_j mu_j s_j / rho_j), so a scenario
whose demand sits at or above the ceiling is infeasible outright.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .scenario import Point, Scenario
from .star import (AggregatedConvolution, BottleneckReport, StarAnalysis,
                   analyze, bottleneck, build_star)
from .weber import WeberProblem, WeberSolution, solve_weber

_RATE_SEARCH_LIMIT = 10_000_000


@dataclass(frozen=True)
class FleetResult:
    """Outcome of the minimal-fleet search at one hub location.

    ``throughput_per_day`` is TH_w * hours_per_day at the chosen fleet; for
    a ceiling-infeasible scenario no fleet was evaluated and it is NaN, for
    a fleet-cap-infeasible one it is the value at max_trucks.
    """

    feasible: bool
    trucks: int | None
    throughput_per_day: float
    demand_per_day: float
    ceiling_per_day: float
    binding_node: int
    iterations: int
    infeasibility_reason: str | None = None  # "ceiling" | "max_trucks"


def min_trucks(scenario: Scenario, center: Point) -> FleetResult:
    """Smallest fleet whose deliverable volume covers daily demand.

    The normalization table grows incrementally across candidate fleet
    sizes, so the whole search costs one full convolution.  If the demand
    is at or above the saturation ceiling the search is skipped entirely.
    """
    star = build_star(scenario, center)
    bn = bottleneck(star)
    cap = scenario.truck_capacity
    demand = scenario.total_demand_per_day
    ceiling_day = bn.ceiling_per_day

    if cap * ceiling_day <= demand:
        return FleetResult(
            feasible=False, trucks=None, throughput_per_day=math.nan,
            demand_per_day=demand, ceiling_per_day=ceiling_day,
            binding_node=bn.binding_node, iterations=0,
            infeasibility_reason="ceiling")

    agg = AggregatedConvolution(star)
    hours = scenario.hours_per_day
    for n in range(1, scenario.max_trucks + 1):
        th_day = agg.warehouse_throughput(n) * hours
        if cap * th_day >= demand:
            return FleetResult(
                feasible=True, trucks=n, throughput_per_day=th_day,
                demand_per_day=demand, ceiling_per_day=ceiling_day,
                binding_node=bn.binding_node, iterations=n)
    return FleetResult(
        feasible=False, trucks=None, throughput_per_day=th_day,
        demand_per_day=demand, ceiling_per_day=ceiling_day,
        binding_node=bn.binding_node, iterations=scenario.max_trucks,
        infeasibility_reason="max_trucks")


def min_center_rate(scenario: Scenario, center: Point,
                    rate_step: float = 0.01
                    ) -> tuple[float | None, FleetResult]:
    """Smallest hub loading rate (on a grid of ``rate_step`` multiples) that
    makes the scenario feasible at this location.

    Returns the rate together with the fleet result at that rate.  If even
    an infinitely fast hub cannot meet demand (a warehouse or the fleet cap
    binds), returns ``(None, result-at-infinite-rate)``.
    """
    if not rate_step > 0:
        raise ValueError("rate_step must be positive")
    base = min_trucks(scenario, center)
    if base.feasible:
        return scenario.center.load_rate_per_hour, base

    probe = min_trucks(scenario.with_center_rate(math.inf), center)
    if not probe.feasible:
        return None, probe

    # demand / (capacity * s_1 * hours) bounds the workable hub rate from below
    demand = scenario.total_demand_per_day
    lb = demand / (scenario.truck_capacity * scenario.center.servers
                   * scenario.hours_per_day)
    k = math.floor(lb / rate_step) + 1
    known_bad = scenario.center.load_rate_per_hour
    while k * rate_step <= known_bad:
        k += 1
    for _ in range(_RATE_SEARCH_LIMIT):
        rate = k * rate_step
        res = min_trucks(scenario.with_center_rate(rate), center)
        if res.feasible:
            return rate, res
        k += 1
    raise RuntimeError("rate search failed to terminate")


@dataclass(frozen=True)
class PlacementOutcome:
    """One hub placement with its fleet answer and steady-state figures.

    ``analysis`` is evaluated at the minimal feasible fleet, or at
    ``max_trucks`` when infeasible so reports can still show the saturated
    throughput and hub utilization.
    """

    label: str
    weber: WeberSolution
    fleet: FleetResult
    analysis: StarAnalysis

    @property
    def location(self) -> Point:
        return self.weber.location


@dataclass(frozen=True)
class LocationComparison:
    weighted: PlacementOutcome
    unweighted: PlacementOutcome
    distance_between: float


def solve_at(scenario: Scenario, center: Point, label: str = "fixed",
             weber_solution: WeberSolution | None = None) -> PlacementOutcome:
    """Fleet search plus full analysis at one location."""
    fleet = min_trucks(scenario, center)
    star = build_star(scenario, center)
    n_report = fleet.trucks if fleet.feasible else scenario.max_trucks
    if weber_solution is None:
        weber_solution = WeberSolution(
            location=(float(center[0]), float(center[1])),
            objective=weber_objective_at(scenario, center),
            iterations=0, converged=True)
    return PlacementOutcome(label=label, weber=weber_solution, fleet=fleet,
                            analysis=analyze(star, n_report))


def weber_objective_at(scenario: Scenario, center: Point) -> float:
    from .weber import weber_objective
    return weber_objective(WeberProblem.from_scenario(scenario, weighted=True), center)


def compare_locations(scenario: Scenario, tol: float = 1e-9,
                      max_iter: int = 10000) -> LocationComparison:
    """Demand-weighted versus unweighted hub placement, solved end to end."""
    sol_w = solve_weber(WeberProblem.from_scenario(scenario, weighted=True),
                        tol=tol, max_iter=max_iter)
    sol_u = solve_weber(WeberProblem.from_scenario(scenario, weighted=False),
                        tol=tol, max_iter=max_iter)
    out_w = solve_at(scenario, sol_w.location, "weighted", sol_w)
    out_u = solve_at(scenario, sol_u.location, "unweighted", sol_u)
    dist = math.hypot(sol_w.location[0] - sol_u.location[0],
                      sol_w.location[1] - sol_u.location[1])
    return LocationComparison(weighted=out_w, unweighted=out_u,
                              distance_between=dist)
