"""Product-form machinery for closed exponential queueing networks.

Normalization constants G(m) are computed by the convolution algorithm, one
station folded in at a time.  Every table is kept in two redundant forms:

* an extended-range linear form, mantissa in [0.5, 1) with a per-entry
  base-2 exponent, so sums and products never under- or overflow no matter
  how wildly the per-station factors are scaled, and
* an independently accumulated natural-log form.

The two are cross-checked whenever a table is built; disagreement or any
non-finite intermediate raises ``NumericalRangeError`` instead of letting a
garbage value escape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

_LN2 = math.log(2.0)
_ROW_SUM_TOL = 1e-12
_TRAFFIC_RESIDUAL_TOL = 1e-10
_CROSS_CHECK_TOL = 1e-9
_DIRECT_SOLVE_LIMIT = 1000


class ReducibleRoutingError(ValueError):
    """The routing chain is not irreducible (not strongly connected)."""


class NumericalRangeError(ArithmeticError):
    """A normalization quantity left the trustworthy numeric range."""


@dataclass(frozen=True)
class Station:
    """One service station of a closed network.

    ``servers`` is an integer for FCFS multi-server exponential stations and
    ``None`` for an infinite-server station, where ``rate`` is 1/mean and the
    effective rate with n customers is ``n * rate``.  ``rate_fn`` overrides
    both with an arbitrary non-decreasing load-dependent rate.
    """

    name: str
    rate: float = 1.0
    servers: int | None = 1
    rate_fn: Callable[[int], float] | None = None

    def __post_init__(self) -> None:
        if self.rate_fn is None:
            if not self.rate > 0:
                raise ValueError(f"station {self.name}: rate must be positive")
            if self.servers is not None and self.servers < 1:
                raise ValueError(f"station {self.name}: servers must be >= 1 or None")

    def service_rate(self, n: int) -> float:
        if n <= 0:
            return 0.0
        if self.rate_fn is not None:
            return float(self.rate_fn(n))
        if self.servers is None:
            return self.rate * n
        return self.rate * min(n, self.servers)

    @property
    def is_infinite_server(self) -> bool:
        return self.servers is None and self.rate_fn is None


def multi_server(name: str, rate: float, servers: int = 1) -> Station:
    return Station(name=name, rate=rate, servers=servers)


def infinite_server(name: str, mean: float) -> Station:
    """Infinite-server station with the given mean holding time.

    A zero mean is allowed (e.g. a travel leg of zero length); the station
    then never holds customers.
    """
    if mean < 0:
        raise ValueError(f"station {name}: mean must be non-negative")
    rate = math.inf if mean == 0 else 1.0 / mean
    return Station(name=name, rate=rate, servers=None)


def _check_routing(routing: np.ndarray) -> np.ndarray:
    r = np.asarray(routing, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("routing matrix must be square")
    if np.any(r < 0):
        raise ValueError("routing probabilities must be non-negative")
    rows = r.sum(axis=1)
    if np.max(np.abs(rows - 1.0)) > _ROW_SUM_TOL:
        raise ValueError("routing matrix rows must sum to 1")
    n_comp, _ = connected_components(csr_matrix(r > 0), connection="strong")
    if n_comp != 1:
        raise ReducibleRoutingError("routing chain is reducible")
    return r


@dataclass(frozen=True)
class ClosedNetwork:
    """Stations, an irreducible routing matrix, and a fixed population."""

    stations: tuple[Station, ...]
    routing: np.ndarray
    population: int

    def __post_init__(self) -> None:
        r = _check_routing(self.routing)
        if r.shape[0] != len(self.stations):
            raise ValueError("routing matrix size must match station count")
        if not (isinstance(self.population, int) and self.population >= 0):
            raise ValueError("population must be a non-negative integer")
        r.flags.writeable = False
        object.__setattr__(self, "routing", r)

    @property
    def num_stations(self) -> int:
        return len(self.stations)


@dataclass(frozen=True)
class VisitRatios:
    """Relative visit frequencies eta.  Only ratios matter downstream; any
    positive rescaling yields the same throughputs."""

    eta: np.ndarray
    normalized: bool = True

    def __post_init__(self) -> None:
        e = np.asarray(self.eta, dtype=float)
        if np.any(e < 0) or not np.any(e > 0):
            raise ValueError("visit ratios must be non-negative with at least one positive entry")
        e.flags.writeable = False
        object.__setattr__(self, "eta", e)

    def scaled(self, factor: float) -> "VisitRatios":
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        return VisitRatios(self.eta * factor, normalized=False)


def solve_traffic(routing: np.ndarray) -> VisitRatios:
    """Probability-normalized solution of eta = eta R.

    Solves directly for moderate sizes and falls back to power iteration on
    very large chains; either way the residual is verified.
    """
    r = _check_routing(routing)
    n = r.shape[0]
    if n <= _DIRECT_SOLVE_LIMIT:
        a = r.T - np.eye(n)
        a[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        eta = np.linalg.solve(a, b)
    else:
        eta = np.full(n, 1.0 / n)
        for _ in range(200_000):
            # damped so that periodic chains converge too
            nxt = 0.5 * (eta + eta @ r)
            nxt /= nxt.sum()
            if np.max(np.abs(nxt - eta)) < 1e-15:
                eta = nxt
                break
            eta = nxt
    eta = np.where(np.abs(eta) < 1e-14, 0.0, eta)
    residual = float(np.max(np.abs(eta @ r - eta)))
    if residual >= _TRAFFIC_RESIDUAL_TOL or np.any(eta < 0):
        raise NumericalRangeError(
            f"traffic equations solved with residual {residual:.3e}")
    return VisitRatios(eta=eta, normalized=True)


# ---------------------------------------------------------------------------
# extended-range ladder arithmetic


def _ladder_dot(mant_a: np.ndarray, exp_a: np.ndarray,
                mant_b: np.ndarray, exp_b: np.ndarray) -> tuple[float, int]:
    """Dot product of two ladder vectors, returned as (mantissa, exponent)."""
    p = mant_a * mant_b
    nz = p != 0.0
    if not nz.any():
        return 0.0, 0
    e = exp_a + exp_b
    emax = int(e[nz].max())
    shift = np.maximum(e - emax, -2_000_000).astype(np.int32)
    s = float(np.ldexp(p, shift).sum())
    if not math.isfinite(s):
        raise NumericalRangeError("non-finite sum in convolution step")
    m, k = math.frexp(s)
    return m, emax + k


def _station_factors(station: Station, eta_j: float, n_max: int
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-station factors g_j(n) = prod_{k<=n} eta_j / mu_j(k) in ladder and
    log form, for n = 0..n_max."""
    mant = np.zeros(n_max + 1)
    exp2 = np.zeros(n_max + 1, dtype=np.int64)
    logs = np.full(n_max + 1, -math.inf)
    mant[0], exp2[0], logs[0] = 0.5, 1, 0.0
    m, e, lg = 0.5, 1, 0.0
    for n in range(1, n_max + 1):
        mu = station.service_rate(n)
        if not mu > 0:
            raise ValueError(f"station {station.name}: rate at load {n} must be positive")
        ratio = 0.0 if math.isinf(mu) else eta_j / mu
        if not (math.isfinite(ratio) and ratio >= 0):
            raise NumericalRangeError(
                f"station {station.name}: invalid load factor at n={n}")
        if ratio == 0.0:
            break  # g stays zero from here on
        m = m * ratio
        m, de = math.frexp(m)
        e += de
        lg += math.log(ratio)
        mant[n], exp2[n], logs[n] = m, e, lg
    return mant, exp2, logs


def _fold_station(gm: np.ndarray, ge: np.ndarray, gl: np.ndarray,
                  fm: np.ndarray, fe: np.ndarray, fl: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One convolution step: returns the table for (previous stations + one)."""
    n_max = len(gm) - 1
    om = np.zeros(n_max + 1)
    oe = np.zeros(n_max + 1, dtype=np.int64)
    ol = np.full(n_max + 1, -math.inf)
    for m in range(n_max + 1):
        om[m], oe[m] = _ladder_dot(gm[:m + 1], ge[:m + 1], fm[m::-1], fe[m::-1])
        ol[m] = float(np.logaddexp.reduce(gl[:m + 1] + fl[m::-1]))
    return om, oe, ol


@dataclass(frozen=True)
class ConvolutionTable:
    """Normalization constants G(0..N) for a fixed station set and eta.

    ``mantissa``/``exponent`` hold the extended-range linear values,
    G(m) = mantissa[m] * 2**exponent[m]; ``log_values`` is the independent
    log-domain companion.
    """

    mantissa: np.ndarray
    exponent: np.ndarray
    log_values: np.ndarray
    node_order: tuple[int, ...]

    @property
    def population(self) -> int:
        return len(self.mantissa) - 1

    def value(self, m: int) -> float:
        """Plain float G(m); may overflow to inf for extreme tables."""
        try:
            return math.ldexp(self.mantissa[m], int(self.exponent[m]))
        except OverflowError:
            return math.inf

    def log_value(self, m: int) -> float:
        mant = self.mantissa[m]
        if mant == 0.0:
            return -math.inf
        return math.log(mant) + _LN2 * float(self.exponent[m])

    def ratio(self, m_num: int, m_den: int) -> float:
        """G(m_num) / G(m_den) without leaving the double range."""
        if self.mantissa[m_den] == 0.0:
            raise NumericalRangeError("ratio denominator is zero")
        q = self.mantissa[m_num] / self.mantissa[m_den]
        return math.ldexp(q, int(self.exponent[m_num] - self.exponent[m_den]))


def _as_eta_array(eta: VisitRatios | Sequence[float] | np.ndarray,
                  count: int) -> np.ndarray:
    arr = eta.eta if isinstance(eta, VisitRatios) else np.asarray(eta, dtype=float)
    if arr.shape != (count,):
        raise ValueError(f"expected {count} visit ratios, got shape {arr.shape}")
    if np.any(arr < 0) or not np.any(arr > 0):
        raise ValueError("visit ratios must be non-negative with at least one positive entry")
    return np.asarray(arr, dtype=float)


def _verify_table(mant: np.ndarray, exp2: np.ndarray, logs: np.ndarray) -> None:
    if mant[0] != 0.5 or exp2[0] != 1:
        raise NumericalRangeError("convolution lost the empty-population unit entry")
    if not np.all(np.isfinite(mant)):
        raise NumericalRangeError("non-finite mantissa in convolution table")
    if np.any(mant <= 0.0):
        raise NumericalRangeError("normalization constant vanished; network cannot hold its population")
    ladder_logs = np.log(mant) + _LN2 * exp2.astype(float)
    err = np.abs(ladder_logs - logs)
    bound = _CROSS_CHECK_TOL * np.maximum(1.0, np.abs(logs))
    if np.any(err > bound):
        worst = int(np.argmax(err - bound))
        raise NumericalRangeError(
            "log-domain and extended-range paths disagree at population "
            f"{worst}: {ladder_logs[worst]!r} vs {logs[worst]!r}")


def convolve_stations(stations: Sequence[Station],
                      eta: VisitRatios | Sequence[float] | np.ndarray,
                      population: int,
                      node_order: Iterable[int] | None = None) -> ConvolutionTable:
    """Convolution over an explicit station list (no routing needed)."""
    if population < 0:
        raise ValueError("population must be non-negative")
    etas = _as_eta_array(eta, len(stations))
    order = tuple(node_order) if node_order is not None else tuple(range(len(stations)))
    if sorted(order) != list(range(len(stations))):
        raise ValueError("node_order must be a permutation of station indices")

    mant = np.zeros(population + 1)
    exp2 = np.zeros(population + 1, dtype=np.int64)
    logs = np.full(population + 1, -math.inf)
    mant[0], exp2[0], logs[0] = 0.5, 1, 0.0
    for idx in order:
        fm, fe, fl = _station_factors(stations[idx], float(etas[idx]), population)
        mant, exp2, logs = _fold_station(mant, exp2, logs, fm, fe, fl)

    _verify_table(mant, exp2, logs)
    for arr in (mant, exp2, logs):
        arr.flags.writeable = False
    return ConvolutionTable(mant, exp2, logs, order)


def buzen_convolve(net: ClosedNetwork,
                   eta: VisitRatios | Sequence[float] | np.ndarray,
                   node_order: Iterable[int] | None = None) -> ConvolutionTable:
    """Normalization table for a closed network at its population."""
    return convolve_stations(net.stations, eta, net.population, node_order)


def throughput(table: ConvolutionTable, population: int | None = None) -> float:
    """Overall throughput TH(N) = G(N-1)/G(N) on the eta scale that built
    the table."""
    n = table.population if population is None else population
    if n < 1:
        raise ValueError("throughput needs at least one customer")
    if n > table.population:
        raise ValueError(f"table only covers populations up to {table.population}")
    return table.ratio(n - 1, n)


def node_throughputs(table: ConvolutionTable,
                     eta: VisitRatios | Sequence[float] | np.ndarray,
                     population: int | None = None) -> np.ndarray:
    """Per-station throughputs TH_j = eta_j * TH for the eta that built the
    table (any common rescaling of eta cancels in the ratio)."""
    arr = eta.eta if isinstance(eta, VisitRatios) else np.asarray(eta, dtype=float)
    return arr * throughput(table, population)


def marginal_distribution(stations: Sequence[Station],
                          eta: VisitRatios | Sequence[float] | np.ndarray,
                          table: ConvolutionTable,
                          node: int) -> np.ndarray:
    """Stationary distribution of the queue length at one station.

    P(n_node = k) = g_node(k) * G_without_node(N - k) / G(N); the result
    sums to 1 up to numerical round-off.
    """
    etas = _as_eta_array(eta, len(stations))
    n = table.population
    if not 0 <= node < len(stations):
        raise ValueError(f"no station with index {node}")

    gm, ge, _ = _station_factors(stations[node], float(etas[node]), n)
    rest = [i for i in range(len(stations)) if i != node]
    if rest:
        comp = convolve_stations([stations[i] for i in rest], etas[rest], n)
        cm, ce = comp.mantissa, comp.exponent
    else:
        cm = np.zeros(n + 1)
        ce = np.zeros(n + 1, dtype=np.int64)
        cm[0], ce[0] = 0.5, 1

    probs = np.zeros(n + 1)
    for k in range(n + 1):
        num = gm[k] * cm[n - k]
        if num == 0.0:
            continue
        shift = int(ge[k] + ce[n - k] - table.exponent[n])
        probs[k] = math.ldexp(num / table.mantissa[n], shift)
    total = float(probs.sum())
    if not math.isfinite(total) or abs(total - 1.0) > 1e-10:
        raise NumericalRangeError(f"marginal distribution sums to {total!r}")
    probs.flags.writeable = False
    return probs


def mean_queue_lengths(stations: Sequence[Station],
                       eta: VisitRatios | Sequence[float] | np.ndarray,
                       table: ConvolutionTable) -> np.ndarray:
    """Expected customers at each station; sums to the population."""
    n = table.population
    ks = np.arange(n + 1)
    return np.array([
        float((marginal_distribution(stations, eta, table, i) * ks).sum())
        for i in range(len(stations))
    ])
