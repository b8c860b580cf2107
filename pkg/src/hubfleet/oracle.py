"""Independent cross-checks for the convolution analysis.

Three oracles that share no code with the production path:

* brute-force product-form enumeration over all states,
* exact CTMC steady state from the generator matrix,
* a discrete-event simulation of the star network.

Plus random instance generation and the validation suite behind the
``validate`` CLI verb.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.linalg import spsolve

from . import convolution as conv
from .scenario import Center, Scenario, Warehouse
from .star import StarNetwork, build_star, explicit_network

_ENUM_STATE_LIMIT = 1_000_000
_CTMC_STATE_LIMIT = 100_000
_DENSE_SOLVE_LIMIT = 3_000


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All ways to place ``total`` customers into ``parts`` stations."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _state_count(population: int, stations: int) -> int:
    return math.comb(population + stations - 1, stations - 1)


def _plain_factors(stations: Sequence[conv.Station], eta: np.ndarray,
                   n_max: int) -> np.ndarray:
    """g_j(n) in plain floats; fine for the small nets oracles handle."""
    g = np.zeros((len(stations), n_max + 1))
    g[:, 0] = 1.0
    for j, st in enumerate(stations):
        for n in range(1, n_max + 1):
            mu = st.service_rate(n)
            g[j, n] = 0.0 if math.isinf(mu) else g[j, n - 1] * eta[j] / mu
    return g


@dataclass(frozen=True)
class EnumerationResult:
    states: tuple[tuple[int, ...], ...]
    probabilities: np.ndarray
    norm_constant: float
    state_count: int

    def marginal(self, node: int) -> np.ndarray:
        n = sum(self.states[0])
        out = np.zeros(n + 1)
        for s, p in zip(self.states, self.probabilities):
            out[s[node]] += p
        return out

    def mean_queue_length(self, node: int) -> float:
        return float(sum(s[node] * p for s, p in zip(self.states, self.probabilities)))


def enumerate_product_form(stations: Sequence[conv.Station] | conv.ClosedNetwork,
                           eta: conv.VisitRatios | Sequence[float] | np.ndarray,
                           population: int | None = None) -> EnumerationResult:
    """Exact normalization constant and state probabilities by enumerating
    every state of a small closed network."""
    if isinstance(stations, conv.ClosedNetwork):
        if population is None:
            population = stations.population
        stations = stations.stations
    if population is None:
        raise ValueError("population required when passing a bare station list")
    etas = np.asarray(eta.eta if isinstance(eta, conv.VisitRatios) else eta,
                      dtype=float)
    count = _state_count(population, len(stations))
    if count > _ENUM_STATE_LIMIT:
        raise ValueError(f"state space too large to enumerate ({count} states)")

    g = _plain_factors(stations, etas, population)
    states = []
    weights = []
    for s in _compositions(population, len(stations)):
        w = 1.0
        for j, n in enumerate(s):
            w *= g[j, n]
        states.append(s)
        weights.append(w)
    weights = np.asarray(weights)
    total = float(weights.sum())
    if not (total > 0 and math.isfinite(total)):
        raise conv.NumericalRangeError(f"enumerated normalization constant is {total!r}")
    return EnumerationResult(states=tuple(states), probabilities=weights / total,
                             norm_constant=total, state_count=count)


@dataclass(frozen=True)
class CtmcResult:
    states: tuple[tuple[int, ...], ...]
    pi: np.ndarray
    station_throughput: np.ndarray  # sum_s pi(s) mu_j(n_j)
    residual: float


def ctmc_throughput(net: conv.ClosedNetwork) -> CtmcResult:
    """Steady state of the explicit Markov chain, solved from the generator.

    Station throughputs are completion rates sum_s pi(s) mu_j(n_j); for a
    product-form network they equal eta_j G(N-1)/G(N).
    """
    count = _state_count(net.population, net.num_stations)
    if count > _CTMC_STATE_LIMIT:
        raise ValueError(f"state space too large for CTMC solve ({count} states)")
    states = list(_compositions(net.population, net.num_stations))
    index = {s: i for i, s in enumerate(states)}
    r = net.routing

    rows, cols, vals = [], [], []
    diag = np.zeros(count)
    for i, s in enumerate(states):
        for j in range(net.num_stations):
            if s[j] == 0:
                continue
            mu = net.stations[j].service_rate(s[j])
            if math.isinf(mu):
                raise ValueError("CTMC oracle needs finite service rates")
            for k in range(net.num_stations):
                p = r[j, k]
                if p == 0.0 or k == j:
                    continue
                t = list(s)
                t[j] -= 1
                t[k] += 1
                rows.append(i)
                cols.append(index[tuple(t)])
                vals.append(mu * p)
                diag[i] -= mu * p
    rows.extend(range(count))
    cols.extend(range(count))
    vals.extend(diag)
    q = coo_matrix((vals, (rows, cols)), shape=(count, count)).tocsr()

    if count <= _DENSE_SOLVE_LIMIT:
        a = q.toarray().T
        a[-1, :] = 1.0
        b = np.zeros(count)
        b[-1] = 1.0
        pi = np.linalg.solve(a, b)
    else:
        a = q.T.tolil()
        a[-1, :] = 1.0
        b = np.zeros(count)
        b[-1] = 1.0
        pi = spsolve(csr_matrix(a), b)

    residual = float(np.max(np.abs(pi @ q.toarray()))) if count <= _DENSE_SOLVE_LIMIT \
        else float(np.max(np.abs(q.T @ pi)))
    if residual >= 1e-10 or np.any(pi < -1e-12):
        raise conv.NumericalRangeError(f"CTMC solve residual {residual:.3e}")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()

    th = np.zeros(net.num_stations)
    for i, s in enumerate(states):
        for j in range(net.num_stations):
            if s[j] > 0:
                th[j] += pi[i] * net.stations[j].service_rate(s[j])
    return CtmcResult(states=tuple(states), pi=pi, station_throughput=th,
                      residual=residual)


# ---------------------------------------------------------------------------
# discrete-event simulation of the star network


class _ExpStream:
    """Blocked exponential draws from a dedicated generator."""

    def __init__(self, rng: np.random.Generator, mean: float, block: int = 2048):
        self.rng = rng
        self.mean = mean
        self.block = block
        self.buf = np.empty(0)
        self.idx = 0

    def next(self) -> float:
        if self.idx >= len(self.buf):
            self.buf = self.rng.exponential(self.mean, self.block)
            self.idx = 0
        v = self.buf[self.idx]
        self.idx += 1
        return float(v)


class _ConstStream:
    def __init__(self, value: float):
        self.value = value

    def next(self) -> float:
        return self.value


class _UniformStream:
    """Blocked U(0,1) draws for routing decisions."""

    def __init__(self, rng: np.random.Generator, block: int = 2048):
        self.rng = rng
        self.block = block
        self.buf = np.empty(0)
        self.idx = 0

    def next(self) -> float:
        if self.idx >= len(self.buf):
            self.buf = self.rng.random(self.block)
            self.idx = 0
        v = self.buf[self.idx]
        self.idx += 1
        return float(v)


class _CallableStream:
    def __init__(self, rng: np.random.Generator, mean: float,
                 fn: Callable[[np.random.Generator, float], float]):
        self.rng = rng
        self.mean = mean
        self.fn = fn

    def next(self) -> float:
        return float(self.fn(self.rng, self.mean))


@dataclass(frozen=True)
class DesEstimate:
    """Replication-averaged simulation estimates with 95% half-widths."""

    warehouse_throughput: float       # deliveries per hour
    warehouse_throughput_hw: float
    per_replication: np.ndarray
    station_names: tuple[str, ...]
    station_sojourn: np.ndarray       # mean time in station per visit, hours
    station_throughput: np.ndarray    # completions per hour
    replications: int
    horizon_events: int
    travel: str


def simulate(star: StarNetwork, trucks: int, *,
             horizon_events: int = 100_000, replications: int = 20,
             seed: int = 0, travel: str | Callable = "exponential",
             warmup_fraction: float = 0.2) -> DesEstimate:
    """Simulate the explicit star network (FCFS hub and docks, infinite-server
    lanes) and estimate throughput and per-station sojourn times.

    The horizon counts processed events per replication; the first
    ``warmup_fraction`` of them is discarded.  Routing, service, and travel
    draws come from separate generators spawned from ``seed``, so runs with
    different travel distributions are common-random-number paired.  Equal
    seeds give bit-identical results.
    """
    s = star.scenario
    k = len(s.warehouses)
    names = ["center"]
    for w in s.warehouses:
        names += [f"lane_out_{w.id}", f"warehouse_{w.id}", f"lane_back_{w.id}"]
    n_st = 1 + 3 * k
    travel_label = travel if isinstance(travel, str) else "callable"
    if isinstance(travel, str) and travel not in ("exponential", "deterministic"):
        raise ValueError(f"unknown travel distribution {travel!r}")

    if trucks == 0 or replications == 0:
        z = np.zeros(n_st)
        return DesEstimate(0.0, 0.0, np.zeros(replications), tuple(names),
                           z.copy(), z.copy(), replications, horizon_events,
                           travel_label)

    # FCFS server counts; lanes get 0 as a placeholder (never queued)
    servers = np.zeros(n_st, dtype=int)
    servers[0] = s.center.servers
    rho = star.rho
    cum = np.cumsum(rho).tolist()
    service_mean = np.zeros(n_st)
    service_mean[0] = 1.0 / s.center.load_rate_per_hour
    lane_mean = np.zeros(n_st)
    kind = np.zeros(n_st, dtype=int)  # 0 hub, 1 lane out, 2 dock, 3 lane back
    for i, w in enumerate(s.warehouses):
        out, dock, back = 1 + 3 * i, 2 + 3 * i, 3 + 3 * i
        kind[out], kind[dock], kind[back] = 1, 2, 3
        servers[dock] = w.servers
        service_mean[dock] = 1.0 / w.unload_rate_per_hour
        lane_mean[out] = lane_mean[back] = float(star.travel_hours[i])

    warm_count = int(warmup_fraction * horizon_events)
    root = np.random.SeedSequence(seed)
    rep_seeds = root.spawn(replications)

    th_w = np.zeros(replications)
    soj_mean = np.zeros((replications, n_st))
    th_station = np.zeros((replications, n_st))

    for rep in range(replications):
        route_seq, service_seq, travel_seq = rep_seeds[rep].spawn(3)
        route_rng = np.random.default_rng(route_seq)
        service_rngs = [np.random.default_rng(ss) for ss in service_seq.spawn(n_st)]
        travel_rng = np.random.default_rng(travel_seq)

        svc = [None] * n_st
        for st in range(n_st):
            if kind[st] in (0, 2):
                svc[st] = _ExpStream(service_rngs[st], service_mean[st])
            elif travel == "exponential":
                svc[st] = _ExpStream(travel_rng, lane_mean[st]) if lane_mean[st] > 0 \
                    else _ConstStream(0.0)
            elif travel == "deterministic":
                svc[st] = _ConstStream(lane_mean[st])
            else:
                svc[st] = _CallableStream(travel_rng, lane_mean[st], travel)
        route_stream = _UniformStream(route_rng)

        def next_route() -> int:
            return bisect_right(cum, route_stream.next())

        busy = [0] * n_st
        queues: list[list[int]] = [[] for _ in range(n_st)]
        qhead = [0] * n_st
        arr = [0.0] * trucks
        heap: list[tuple[float, int, int, int]] = []
        seq = 0

        def enter_fcfs(st: int, truck: int, now: float) -> None:
            nonlocal seq
            arr[truck] = now
            if busy[st] < servers[st]:
                busy[st] += 1
                seq += 1
                heapq.heappush(heap, (now + svc[st].next(), seq, truck, st))
            else:
                queues[st].append(truck)

        def enter_lane(st: int, truck: int, now: float) -> None:
            nonlocal seq
            arr[truck] = now
            seq += 1
            heapq.heappush(heap, (now + svc[st].next(), seq, truck, st))

        for truck in range(trucks):
            enter_fcfs(0, truck, 0.0)

        completions = np.zeros(n_st, dtype=np.int64)
        soj_sum = np.zeros(n_st)
        t_warm = 0.0
        t = 0.0
        pops = 0
        while pops < horizon_events and heap:
            t, _, truck, st = heapq.heappop(heap)
            pops += 1
            if pops == warm_count:
                t_warm = t
            counted = pops > warm_count
            if counted:
                completions[st] += 1
                soj_sum[st] += t - arr[truck]
            ki = kind[st]
            if ki in (0, 2):
                q = queues[st]
                if qhead[st] < len(q):
                    nxt = q[qhead[st]]
                    qhead[st] += 1
                    if qhead[st] > 512 and qhead[st] * 2 > len(q):
                        del q[:qhead[st]]
                        qhead[st] = 0
                    seq += 1
                    heapq.heappush(heap, (t + svc[st].next(), seq, nxt, st))
                else:
                    busy[st] -= 1
            if ki == 0:
                dest = next_route()
                enter_lane(1 + 3 * dest, truck, t)
            elif ki == 1:
                enter_fcfs(st + 1, truck, t)
            elif ki == 2:
                enter_lane(st + 1, truck, t)
            else:
                enter_fcfs(0, truck, t)

        window = t - t_warm
        if window <= 0:
            raise ValueError("horizon too short for the requested warm-up")
        docks = kind == 2
        th_w[rep] = completions[docks].sum() / window
        th_station[rep] = completions / window
        with np.errstate(invalid="ignore"):
            soj_mean[rep] = np.where(completions > 0, soj_sum / np.maximum(completions, 1), 0.0)

    mean = float(th_w.mean())
    hw = 0.0 if replications < 2 else \
        1.96 * float(th_w.std(ddof=1)) / math.sqrt(replications)
    return DesEstimate(
        warehouse_throughput=mean, warehouse_throughput_hw=hw,
        per_replication=th_w, station_names=tuple(names),
        station_sojourn=soj_mean.mean(axis=0),
        station_throughput=th_station.mean(axis=0),
        replications=replications, horizon_events=horizon_events,
        travel=travel_label)


# ---------------------------------------------------------------------------
# random instances and the validation suite


def random_scenario(rng: np.random.Generator, n_warehouses: int = 2, *,
                    rate_range: tuple[float, float] = (0.5, 4.0),
                    radius_range: tuple[float, float] = (0.5, 5.0),
                    demand_range: tuple[float, float] = (0.5, 4.0),
                    max_servers: int = 1,
                    speed: float = 1.0) -> Scenario:
    """Random star instance with warehouses scattered around the origin, so
    analyzing at center (0, 0) gives lane distances inside ``radius_range``."""
    warehouses = []
    for i in range(n_warehouses):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        radius = rng.uniform(*radius_range)
        warehouses.append(Warehouse(
            id=2 + i,
            position=(radius * math.cos(angle), radius * math.sin(angle)),
            demand_per_day=float(rng.uniform(*demand_range)),
            servers=int(rng.integers(1, max_servers + 1)),
            unload_rate_per_hour=float(rng.uniform(*rate_range)),
        ))
    center = Center(servers=int(rng.integers(1, max_servers + 1)),
                    load_rate_per_hour=float(rng.uniform(*rate_range)))
    return Scenario(warehouses=tuple(warehouses), center=center,
                    truck_speed_kmh=speed)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check(name: str, fn: Callable[[], str]) -> CheckResult:
    try:
        return CheckResult(name, True, fn())
    except Exception as exc:  # noqa: BLE001 - report, do not crash the suite
        return CheckResult(name, False, f"{type(exc).__name__}: {exc}")


def run_validation_suite(seed: int = 0, *, instances: int = 4, trucks: int = 4,
                         des_events: int = 60_000, des_replications: int = 10,
                         corrupt_convolution: bool = False) -> list[CheckResult]:
    """Cross-validate the analytic pipeline against all three oracles.

    ``corrupt_convolution`` is a test hook: it injects a wrong table entry
    to prove the log/linear agreement check actually fires.
    """
    rng = np.random.default_rng(seed)
    results = []

    def enumeration_check() -> str:
        worst = 0.0
        for _ in range(instances):
            sc = random_scenario(rng, int(rng.integers(2, 4)))
            star = build_star(sc, (0.0, 0.0))
            n = int(rng.integers(1, trucks + 1))
            net, eta = explicit_network(star, n)
            table = conv.buzen_convolve(net, eta)
            enum = enumerate_product_form(net, eta)
            rel = abs(table.value(n) - enum.norm_constant) / enum.norm_constant
            worst = max(worst, rel)
            from .star import aggregated_norm_constants
            agg_tab = aggregated_norm_constants(star, n)
            rel2 = abs(agg_tab.value(n) - enum.norm_constant) / enum.norm_constant
            worst = max(worst, rel2)
            if worst > 1e-10:
                raise AssertionError(
                    f"normalization mismatch {worst:.2e} (explicit vs enumerated)")
        return f"max relative G error {worst:.2e} over {instances} instances"

    results.append(_check("enumeration vs convolution", enumeration_check))

    def ctmc_check() -> str:
        worst = 0.0
        for _ in range(instances):
            sc = random_scenario(rng, 2)
            star = build_star(sc, (0.0, 0.0))
            n = int(rng.integers(1, trucks + 1))
            net, eta = explicit_network(star, n)
            table = conv.buzen_convolve(net, eta)
            th = conv.node_throughputs(table, eta)
            res = ctmc_throughput(net)
            rel = float(np.max(np.abs(res.station_throughput - th)
                               / np.maximum(th, 1e-300)))
            worst = max(worst, rel)
            if rel > 1e-9:
                raise AssertionError(f"CTMC throughput mismatch {rel:.2e}")
        return f"max relative throughput error {worst:.2e}"

    results.append(_check("ctmc vs convolution", ctmc_check))

    def grid_check() -> str:
        from .star import AggregatedConvolution
        from .weber import WeberProblem, solve_weber
        violations = 0
        for _ in range(instances):
            sc = random_scenario(rng, 3, radius_range=(2.0, 5.0))
            sol = solve_weber(WeberProblem.from_scenario(sc, weighted=True))
            pts = [sol.location] + [
                (sol.location[0] + 1.5 * math.cos(a), sol.location[1] + 1.5 * math.sin(a))
                for a in rng.uniform(0, 2 * math.pi, 6)
            ]
            vals = []
            for p in pts:
                st = build_star(sc, p)
                vals.append((st.h, AggregatedConvolution(st).warehouse_throughput(3)))
            best = max(v for _, v in vals)
            if vals[0][1] < best * (1 - 1e-12):
                violations += 1
            order = sorted(vals, key=lambda hv: hv[0])
            for (h1, v1), (h2, v2) in zip(order, order[1:]):
                if h2 > h1 + 1e-12 and not v2 < v1:
                    violations += 1
        if violations:
            raise AssertionError(f"{violations} ordering violations")
        return "hub point maximal; throughput decreasing in travel burden"

    results.append(_check("throughput maximal at the weighted hub point", grid_check))

    def monotone_check() -> str:
        from .star import AggregatedConvolution, bottleneck
        for _ in range(instances):
            sc = random_scenario(rng, 2)
            star = build_star(sc, (0.0, 0.0))
            agg = AggregatedConvolution(star)
            ceiling = bottleneck(star).ceiling_per_hour
            prev = 0.0
            for n in range(1, 16):
                th = agg.warehouse_throughput(n)
                if not th > prev:
                    raise AssertionError(f"throughput not strictly increasing at N={n}")
                if not th < ceiling:
                    raise AssertionError(f"throughput {th} reached ceiling {ceiling}")
                prev = th
        return "strictly increasing in fleet size, always below the ceiling"

    results.append(_check("fleet-size monotonicity", monotone_check))

    def insensitivity_check() -> str:
        from .star import AggregatedConvolution
        sc = random_scenario(rng, 2, radius_range=(1.0, 3.0))
        star = build_star(sc, (0.0, 0.0))
        n = 3
        analytic = AggregatedConvolution(star).warehouse_throughput(n)
        seed2 = int(rng.integers(0, 2**31))
        a = simulate(star, n, horizon_events=des_events,
                     replications=des_replications, seed=seed2,
                     travel="exponential")
        b = simulate(star, n, horizon_events=des_events,
                     replications=des_replications, seed=seed2,
                     travel="deterministic")
        gap = abs(a.warehouse_throughput - b.warehouse_throughput)
        budget = a.warehouse_throughput_hw + b.warehouse_throughput_hw
        if gap >= budget:
            raise AssertionError(
                f"exp vs det gap {gap:.4g} exceeds CI budget {budget:.4g}")
        for est in (a, b):
            if abs(est.warehouse_throughput - analytic) > 3 * max(est.warehouse_throughput_hw, 1e-12):
                raise AssertionError(
                    f"simulated {est.warehouse_throughput:.4g} far from analytic {analytic:.4g}")
        return (f"exp vs det gap {gap:.2e} within CI budget {budget:.2e}; "
                f"analytic {analytic:.4g} covered")

    results.append(_check("travel-time insensitivity (DES)", insensitivity_check))

    def range_check() -> str:
        sc = random_scenario(rng, 2, rate_range=(0.5, 1.0))
        star = build_star(sc, (0.0, 0.0))
        table = conv.convolve_stations(*star.aggregated_stations(), 60)
        mant = np.array(table.mantissa)
        if corrupt_convolution:
            mant[37] *= 1.0 + 1e-4  # deliberate corruption, must be caught
        conv._verify_table(mant, np.array(table.exponent),
                           np.array(table.log_values))
        return "log-domain and extended-range paths agree"

    results.append(_check("log/linear convolution agreement", range_check))
    return results
