"""Star-shaped closed network: hub, travel lanes, and warehouse docks.

Each truck cycles hub -> outbound lane -> warehouse -> return lane, choosing
warehouse j with probability rho_j (its demand share).  A round trip visits
four stations, so the hub carries visit ratio 1/4 and warehouse j (and each
of its two lanes) rho_j / 4.

Because the lanes are infinite servers, the 3(J-1)+1 station network
collapses exactly into J+1 stations: hub, the J-1 warehouse docks, and one
pooled infinite server with visit ratio 1/2 and mean holding time
sum_j rho_j d_j(x) / S.  All production analysis runs on that aggregated
form; the explicit network is kept available for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import convolution as conv
from .scenario import Point, Scenario, demand_fractions

HUB_VISIT_RATIO = 0.25
POOLED_LANE_VISIT_RATIO = 0.5


@dataclass(frozen=True)
class StarNetwork:
    """A scenario pinned to one candidate hub location."""

    scenario: Scenario
    center: Point
    distances: np.ndarray        # km, warehouse order
    travel_hours: np.ndarray     # one-way lane time d_j / S
    eta_warehouse: np.ndarray    # rho_j / 4
    h: float                     # sum_j (rho_j / 4) * d_j / S, hours
    kappa: float                 # 2 h, the pooled-lane load factor

    @property
    def eta_center(self) -> float:
        return HUB_VISIT_RATIO

    @property
    def rho(self) -> np.ndarray:
        return self.eta_warehouse / HUB_VISIT_RATIO

    def aggregated_stations(self) -> tuple[tuple[conv.Station, ...], np.ndarray]:
        """Hub, warehouse docks, pooled lane station, with visit ratios."""
        s = self.scenario
        stations = [conv.multi_server("center", s.center.load_rate_per_hour,
                                      s.center.servers)]
        stations += [
            conv.multi_server(f"warehouse_{w.id}", w.unload_rate_per_hour, w.servers)
            for w in s.warehouses
        ]
        stations.append(conv.infinite_server("lanes", 4.0 * self.h))
        eta = np.concatenate((
            [HUB_VISIT_RATIO], self.eta_warehouse, [POOLED_LANE_VISIT_RATIO]))
        return tuple(stations), eta


def build_star(scenario: Scenario, center: Point) -> StarNetwork:
    rho = np.asarray(demand_fractions(scenario))
    d = np.asarray([scenario.metric.distance(p, center)
                    for p in scenario.warehouse_positions])
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite and non-negative")
    travel = d / scenario.truck_speed_kmh
    eta_w = rho * HUB_VISIT_RATIO
    h = float((eta_w * travel).sum())
    return StarNetwork(
        scenario=scenario,
        center=(float(center[0]), float(center[1])),
        distances=d,
        travel_hours=travel,
        eta_warehouse=eta_w,
        h=h,
        kappa=2.0 * h,
    )


def explicit_network(star: StarNetwork, trucks: int
                     ) -> tuple[conv.ClosedNetwork, conv.VisitRatios]:
    """The full 3(J-1)+1 station network: hub, then per warehouse an
    outbound lane, the dock, and a return lane.  Used for validation; the
    aggregated form is the production path."""
    s = star.scenario
    rho = star.rho
    k = len(s.warehouses)
    stations: list[conv.Station] = [
        conv.multi_server("center", s.center.load_rate_per_hour, s.center.servers)]
    for i, w in enumerate(s.warehouses):
        mean = float(star.travel_hours[i])
        stations.append(conv.infinite_server(f"lane_out_{w.id}", mean))
        stations.append(conv.multi_server(f"warehouse_{w.id}",
                                          w.unload_rate_per_hour, w.servers))
        stations.append(conv.infinite_server(f"lane_back_{w.id}", mean))

    n = 1 + 3 * k
    routing = np.zeros((n, n))
    for i in range(k):
        out, dock, back = 1 + 3 * i, 2 + 3 * i, 3 + 3 * i
        routing[0, out] = rho[i]
        routing[out, dock] = 1.0
        routing[dock, back] = 1.0
        routing[back, 0] = 1.0
    net = conv.ClosedNetwork(tuple(stations), routing, trucks)
    eta = np.empty(n)
    eta[0] = HUB_VISIT_RATIO
    for i in range(k):
        eta[1 + 3 * i: 4 + 3 * i] = star.eta_warehouse[i]
    return net, conv.VisitRatios(eta, normalized=True)


class AggregatedConvolution:
    """Normalization table of the aggregated star, extensible one truck at a
    time so fleet search reuses all previous work.

    Stations are folded hub first, then docks, then the pooled lane, and the
    running per-station rows are kept so that extending the population by
    one costs a single new column.
    """

    def __init__(self, star: StarNetwork):
        self.star = star
        stations, eta = star.aggregated_stations()
        self.stations = stations
        self.eta = eta
        self._count = len(stations)
        self._n = 0
        cap = 8
        shape = (self._count, cap)
        self._g_mant = np.zeros(shape)
        self._g_exp = np.zeros(shape, dtype=np.int64)
        self._g_log = np.full(shape, -math.inf)
        self._row_mant = np.zeros(shape)
        self._row_exp = np.zeros(shape, dtype=np.int64)
        self._row_log = np.full(shape, -math.inf)
        self._g_mant[:, 0], self._g_exp[:, 0], self._g_log[:, 0] = 0.5, 1, 0.0
        self._row_mant[0, 0], self._row_exp[0, 0] = 0.5, 1
        self._row_log[0, 0] = 0.0
        for j in range(1, self._count):
            self._row_mant[j, 0], self._row_exp[j, 0] = 0.5, 1
            self._row_log[j, 0] = 0.0

    def _ensure_capacity(self, n: int) -> None:
        cap = self._g_mant.shape[1]
        if n < cap:
            return
        new_cap = max(n + 1, 2 * cap)
        def grow(a, fill):
            out = np.full((self._count, new_cap), fill, dtype=a.dtype)
            out[:, :cap] = a
            return out
        self._g_mant = grow(self._g_mant, 0.0)
        self._g_exp = grow(self._g_exp, 0)
        self._g_log = grow(self._g_log, -math.inf)
        self._row_mant = grow(self._row_mant, 0.0)
        self._row_exp = grow(self._row_exp, 0)
        self._row_log = grow(self._row_log, -math.inf)

    def _extend_one(self) -> None:
        n = self._n + 1
        self._ensure_capacity(n)
        for j, st in enumerate(self.stations):
            mu = st.service_rate(n)
            ratio = 0.0 if math.isinf(mu) else float(self.eta[j]) / mu
            prev = self._g_mant[j, n - 1]
            m = prev * ratio
            if m == 0.0:
                self._g_mant[j, n] = 0.0
                self._g_log[j, n] = -math.inf
            else:
                m, de = math.frexp(m)
                self._g_mant[j, n] = m
                self._g_exp[j, n] = self._g_exp[j, n - 1] + de
                self._g_log[j, n] = self._g_log[j, n - 1] + math.log(ratio)
        # row 0 is just the hub's own factors
        self._row_mant[0, n] = self._g_mant[0, n]
        self._row_exp[0, n] = self._g_exp[0, n]
        self._row_log[0, n] = self._g_log[0, n]
        for j in range(1, self._count):
            self._row_mant[j, n], self._row_exp[j, n] = conv._ladder_dot(
                self._row_mant[j - 1, :n + 1], self._row_exp[j - 1, :n + 1],
                self._g_mant[j, n::-1], self._g_exp[j, n::-1])
            self._row_log[j, n] = float(np.logaddexp.reduce(
                self._row_log[j - 1, :n + 1] + self._g_log[j, n::-1]))
        self._n = n

    def extend_to(self, population: int) -> "AggregatedConvolution":
        if population < 0:
            raise ValueError("population must be non-negative")
        while self._n < population:
            self._extend_one()
        return self

    @property
    def population(self) -> int:
        return self._n

    def table(self, population: int | None = None) -> conv.ConvolutionTable:
        n = self._n if population is None else population
        self.extend_to(n)
        last = self._count - 1
        mant = self._row_mant[last, :n + 1].copy()
        exp2 = self._row_exp[last, :n + 1].copy()
        logs = self._row_log[last, :n + 1].copy()
        conv._verify_table(mant, exp2, logs)
        for arr in (mant, exp2, logs):
            arr.flags.writeable = False
        return conv.ConvolutionTable(mant, exp2, logs,
                                     tuple(range(self._count)))

    def throughput(self, trucks: int) -> float:
        """Overall TH(N) = G(N-1)/G(N) per hour."""
        if trucks < 1:
            raise ValueError("throughput needs at least one truck")
        self.extend_to(trucks)
        last = self._count - 1
        den = self._row_mant[last, trucks]
        if den == 0.0:
            raise conv.NumericalRangeError("normalization constant vanished")
        q = self._row_mant[last, trucks - 1] / den
        return math.ldexp(q, int(self._row_exp[last, trucks - 1]
                                 - self._row_exp[last, trucks]))

    def warehouse_throughput(self, trucks: int) -> float:
        """Deliveries per hour over all warehouses: TH(N)/4."""
        return HUB_VISIT_RATIO * self.throughput(trucks)


def aggregated_norm_constants(star: StarNetwork, population: int
                              ) -> conv.ConvolutionTable:
    """G(0..population) for the aggregated J+1 station form."""
    return AggregatedConvolution(star).table(population)


@dataclass(frozen=True)
class StarAnalysis:
    """Steady-state figures for a star network with a fixed fleet."""

    trucks: int
    table: conv.ConvolutionTable
    throughput: float                 # per hour, all four legs combined
    warehouse_throughput: float       # deliveries per hour, = throughput / 4
    warehouse_throughputs: np.ndarray  # per warehouse, rho_j * warehouse_throughput
    passage_time_hours: float          # round-trip time 4 N / throughput
    busy_center: float                 # P(hub has at least one truck)
    marginals: tuple[np.ndarray, ...]  # aggregated stations: hub, docks, pooled lane
    hours_per_day: float

    @property
    def warehouse_throughput_per_day(self) -> float:
        return self.warehouse_throughput * self.hours_per_day

    @property
    def warehouse_throughputs_per_day(self) -> np.ndarray:
        return self.warehouse_throughputs * self.hours_per_day


def analyze(star: StarNetwork, trucks: int) -> StarAnalysis:
    """Throughputs, passage time, hub busy probability, and marginals."""
    if trucks < 1:
        raise ValueError("analysis needs at least one truck")
    stations, eta = star.aggregated_stations()
    table = aggregated_norm_constants(star, trucks)
    th = conv.throughput(table)
    th_w = HUB_VISIT_RATIO * th
    marginals = tuple(
        conv.marginal_distribution(stations, eta, table, i)
        for i in range(len(stations))
    )
    return StarAnalysis(
        trucks=trucks,
        table=table,
        throughput=th,
        warehouse_throughput=th_w,
        warehouse_throughputs=star.rho * th_w,
        passage_time_hours=4.0 * trucks / th,
        busy_center=1.0 - float(marginals[0][0]),
        marginals=marginals,
        hours_per_day=star.scenario.hours_per_day,
    )


@dataclass(frozen=True)
class BottleneckReport:
    """Saturation caps as the fleet grows without bound.

    ``overall_caps`` are per-station limits mu s / eta on the combined
    throughput scale (hub first, then warehouses; infinite-server lanes
    never bind).  ``ceiling_per_hour`` is the same limit expressed as
    deliveries per hour: min(mu_1 s_1, min_j mu_j s_j / rho_j).
    """

    overall_caps: np.ndarray
    binding_node: int              # 1 for the hub, else the warehouse id
    ceiling_per_hour: float
    hours_per_day: float

    @property
    def ceiling_per_day(self) -> float:
        return self.ceiling_per_hour * self.hours_per_day


def bottleneck(star: StarNetwork) -> BottleneckReport:
    s = star.scenario
    rho = star.rho
    caps_w = [s.center.load_rate_per_hour * s.center.servers]
    caps_w += [
        w.unload_rate_per_hour * w.servers / rho[i]
        for i, w in enumerate(s.warehouses)
    ]
    caps_w = np.asarray(caps_w)
    idx = int(np.argmin(caps_w))
    binding = 1 if idx == 0 else s.warehouses[idx - 1].id
    return BottleneckReport(
        overall_caps=caps_w * 4.0,
        binding_node=binding,
        ceiling_per_hour=float(caps_w[idx]),
        hours_per_day=s.hours_per_day,
    )


def throughput_vs_location(scenario: Scenario, trucks: int,
                           grid: list[Point]) -> list[tuple[Point, float]]:
    """Warehouse throughput per hour at each candidate hub location."""
    out = []
    for x in grid:
        agg = AggregatedConvolution(build_star(scenario, x))
        out.append((x, agg.warehouse_throughput(trucks)))
    return out
