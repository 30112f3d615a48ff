"""Nonsaturated capacity estimation from saturation service times.

The utilization of a queue is its packet arrival rate over its mean service
rate.  The service rate in turn depends on how many queues of each class are
concurrently active, which is itself governed by the utilizations, so the two
are solved as a fixed point: the number of active queues per class is modeled
as binomial with the class utilization as the per-queue activity probability,
and the service rate is the weight-average of per-state saturation service
rates over that activity lattice.  Best-effort (saturated) classes are pinned
fully active, which makes the estimate conservative for the real-time
classes.
"""

from __future__ import annotations

import heapq
import math
import threading
from dataclasses import dataclass

from .errors import ConvergenceError
from .saturation import service_time
from .scenario import Scenario, SolverConfig, TrafficClassTable
from .timing import ExchangeTimes, exchange_times


def _binom_pmf(n: int, k: int, p: float) -> float:
    # log-space keeps large-population binomials finite
    if p <= 0.0:
        return 1.0 if k == 0 else 0.0
    if p >= 1.0:
        return 1.0 if k == n else 0.0
    log_pmf = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
               + k * math.log(p) + (n - k) * math.log1p(-p))
    return math.exp(log_pmf)


def activity_weight(j: int, f_prime, rho, table: TrafficClassTable) -> float:
    """Joint probability of the active-count vector, given class ``j`` active.

    One queue of class ``j`` is the conditioning one, so its class contributes
    a binomial over the remaining ``f_j - 1`` queues; every other class
    contributes an unconditioned binomial over its ``f`` queues.
    """
    weight = 1.0
    for jp, tc in enumerate(table):
        f = tc.flow_count
        k = int(f_prime[jp])
        p = min(max(float(rho[jp]), 0.0), 1.0)
        if jp == j:
            if not 1 <= k <= f:
                raise ValueError(f"conditioning class count {k} outside [1, {f}]")
            weight *= _binom_pmf(f - 1, k - 1, p)
        else:
            if not 0 <= k <= f:
                raise ValueError(f"class {jp} count {k} outside [0, {f}]")
            weight *= _binom_pmf(f, k, p)
    return weight


def _support(j: int, cond: int, f: int, p: float, pinned: bool):
    """Per-class activity support as (count, pmf) pairs, heaviest first."""
    p = min(max(p, 0.0), 1.0)
    if pinned:
        return [(f, 1.0)]
    if j == cond:
        pairs = [(k, _binom_pmf(f - 1, k - 1, p)) for k in range(1, f + 1)]
    else:
        pairs = [(k, _binom_pmf(f, k, p)) for k in range(0, f + 1)]
    pairs = [pair for pair in pairs if pair[1] > 0.0]
    pairs.sort(key=lambda pair: (-pair[1], pair[0]))
    return pairs


def _lattice(table, j, rho, saturated, epsilon):
    """Yield (active-count vector, weight) heaviest-first until the
    accumulated probability mass reaches 1 - epsilon."""
    supports = [_support(jp, j, tc.flow_count, rho[jp], jp in saturated)
                for jp, tc in enumerate(table)]
    start = tuple(0 for _ in supports)

    def weight(idx):
        w = 1.0
        for s, i in zip(supports, idx):
            w *= s[i][1]
        return w

    heap = [(-weight(start), start)]
    seen = {start}
    accumulated = 0.0
    while heap and accumulated < 1.0 - epsilon:
        neg_w, idx = heapq.heappop(heap)
        counts = tuple(s[i][0] for s, i in zip(supports, idx))
        w = -neg_w
        accumulated += w
        yield counts, w
        for dim, s in enumerate(supports):
            if idx[dim] + 1 < len(s):
                nxt = idx[:dim] + (idx[dim] + 1,) + idx[dim + 1:]
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, (-weight(nxt), nxt))


class ServiceTimeCache:
    """Memo for reduced-table saturation solves, shared across sweeps.

    Keyed on everything a solve depends on, so one cache instance can back
    any number of scenarios; concurrent lookups tolerate last-write-wins.
    """

    def __init__(self):
        self._store: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def _key(table: TrafficClassTable, times: ExchangeTimes, counts):
        per_class = tuple(
            (tc.ac, tc.group, tc.aifs_offset, table.ac_params(j).cw_min,
             table.ac_params(j).cw_max, table.ac_params(j).retry_limit,
             times.payload[j], times.success[j], times.collision[j], int(c))
            for j, (tc, c) in enumerate(zip(table, counts)))
        return (times.access, times.slot_time, per_class)

    def service_times(self, table, times, counts, config) -> dict[int, float]:
        key = self._key(table, times, counts)
        found = self._store.get(key)
        if found is not None:
            self.hits += 1
            return found
        self.misses += 1
        value = service_time(table, times, counts, config)
        with self._lock:
            self._store[key] = value
        return value


def mean_service_rate(j: int, rho, table: TrafficClassTable, times: ExchangeTimes,
                      saturated: frozenset[int], epsilon: float,
                      config: SolverConfig | None = None,
                      cache: ServiceTimeCache | None = None) -> float:
    """Average frame service rate of class ``j`` (frames/s).

    The activity weights describe the stationary state seen while the queue
    is busy; frame completions inside a state arrive at that state's rate, so
    the long-run service rate is the weight-average of the per-state rates.
    (Averaging the per-state service *times* instead would sample states per
    frame rather than per unit busy time, which understates the rate because
    slow states serve fewer frames per second, and makes the utilization
    ratio inconsistent with the busy-time fraction it is defined to be.)
    Enumeration stops once the retained mass reaches 1 - epsilon and the
    retained weights are renormalized.
    """
    if j in saturated:
        raise ValueError("service rate is undefined for a best-effort class")
    total = 0.0
    mass = 0.0
    for counts, w in _lattice(table, j, rho, saturated, epsilon):
        if cache is not None:
            srv = cache.service_times(table, times, counts, config)[j]
        else:
            srv = service_time(table, times, counts, config)[j]
        total += w / srv
        mass += w
    return 1e6 * total / mass


@dataclass(frozen=True)
class CapacitySolution:
    """Per-class utilization fixed point."""

    arrival_rate: tuple[float, ...]     # packets/s; 0 marks best-effort classes
    service_rate: tuple[float, ...]     # packets/s; 0 for best-effort classes
    utilization: tuple[float, ...]      # unclamped; > 1 signals overload
    saturated: tuple[bool, ...]
    activity: tuple[tuple[int, float], ...]  # per class (queues, clamped utilization)
    iterations: int
    residual: float
    truncated_mass: float               # worst-case lattice mass discarded

    def max_real_time_utilization(self) -> tuple[float, int]:
        """Largest utilization among real-time classes and its class index."""
        best, arg = -1.0, -1
        for jp, (u, sat) in enumerate(zip(self.utilization, self.saturated)):
            if not sat and u > best:
                best, arg = u, jp
        return best, arg


def solve_utilization(table: TrafficClassTable, times: ExchangeTimes,
                      config: SolverConfig | None = None,
                      epsilon: float = 1e-6,
                      cache: ServiceTimeCache | None = None,
                      initial_rho: float = 1.0) -> CapacitySolution:
    """Solve the coupled utilization/service-rate fixed point.

    Utilizations are damped-iterated from ``initial_rho``; values are clamped
    into [0, 1] only where they act as activity probabilities, never in the
    reported vector, so overload remains visible to the admission test.

    Near the capacity boundary the coupled load response is bistable (a
    congested and an uncongested branch can coexist).  The default start from
    saturation relaxes onto the congested branch whenever it exists, which is
    the conservative choice for admission: a configuration is accepted only
    if even the congested branch settles below the threshold.
    """
    config = config or SolverConfig()
    n = len(table)
    if n == 0:
        raise ValueError("no traffic classes")
    saturated = frozenset(j for j, tc in enumerate(table) if tc.saturated)
    lam = [0.0 if j in saturated else table[j].arrival_rate() for j in range(n)]
    for j in range(n):
        if j not in saturated and lam[j] <= 0:
            raise ValueError(f"class {j} must have a positive arrival rate")

    rho = [1.0 if j in saturated else float(initial_rho) for j in range(n)]
    mu = [0.0] * n
    residual = math.inf
    iterations = 0
    converged = not (set(range(n)) - saturated)
    while iterations < config.rho_max_iterations and not converged:
        iterations += 1
        clamped = [min(max(r, 0.0), 1.0) for r in rho]
        residual = 0.0
        for j in range(n):
            if j in saturated:
                continue
            mu[j] = mean_service_rate(j, clamped, table, times, saturated,
                                      epsilon, config, cache)
            target = lam[j] / mu[j]
            residual = max(residual, abs(target - rho[j]))
            rho[j] = (1.0 - config.damping) * rho[j] + config.damping * target
        if residual < config.rho_tolerance:
            converged = True
    if not converged:
        raise ConvergenceError(
            f"utilization fixed point did not converge after {iterations} "
            f"iterations (residual {residual:.3e})",
            residual=residual, iterations=iterations)

    activity = tuple((tc.flow_count, 1.0 if j in saturated
                      else min(max(rho[j], 0.0), 1.0))
                     for j, tc in enumerate(table))
    return CapacitySolution(
        arrival_rate=tuple(lam), service_rate=tuple(mu),
        utilization=tuple(1.0 if j in saturated else rho[j] for j in range(n)),
        saturated=tuple(j in saturated for j in range(n)),
        activity=activity, iterations=iterations,
        residual=0.0 if math.isinf(residual) else residual,
        truncated_mass=epsilon)


def solve_scenario_utilization(scenario: Scenario,
                               cache: ServiceTimeCache | None = None,
                               initial_rho: float = 1.0) -> CapacitySolution:
    table = scenario.traffic_classes()
    times = exchange_times(table, scenario.phy, scenario.access)
    return solve_utilization(table, times, scenario.solver,
                             epsilon=scenario.admission.weight_truncation_epsilon,
                             cache=cache, initial_rho=initial_rho)


@dataclass(frozen=True)
class FlowCountProbe:
    flows: int
    max_utilization: float
    binding_class: int
    admissible: bool


def max_admitted_flows(build_scenario, rho_threshold: float | None = None,
                       upper_hint: int = 8, hard_limit: int = 4096,
                       cache: ServiceTimeCache | None = None,
                       ) -> tuple[int, list[FlowCountProbe]]:
    """Largest flow count whose utilization stays within the threshold.

    ``build_scenario(k)`` must return the scenario carrying ``k`` flows; the
    load response is monotone in ``k``, so an exponential probe for an upper
    bound followed by bisection finds the boundary.  Returns the boundary and
    the probe log.
    """
    cache = cache or ServiceTimeCache()
    probes: list[FlowCountProbe] = []

    def admissible(k: int) -> bool:
        scenario = build_scenario(k)
        threshold = (scenario.admission.rho_threshold
                     if rho_threshold is None else rho_threshold)
        try:
            solution = solve_scenario_utilization(scenario, cache=cache)
        except ConvergenceError:
            probes.append(FlowCountProbe(k, math.inf, -1, False))
            return False
        worst, arg = solution.max_real_time_utilization()
        ok = worst <= threshold
        probes.append(FlowCountProbe(k, worst, arg, ok))
        return ok

    if not admissible(1):
        return 0, probes
    lo = 1
    hi = max(2, upper_hint)
    while admissible(hi):
        lo = hi
        hi *= 2
        if hi > hard_limit:
            raise RuntimeError(f"no utilization boundary below {hard_limit} flows")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    return lo, probes
