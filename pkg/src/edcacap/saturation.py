"""Saturation analysis of the EDCA contention process.

Every class is assumed backlogged.  Slots are indexed from the end of the
shortest AIFS after a busy period; a class whose AIFS is ``d`` slots longer
only contends from slot ``d + 1`` on, which partitions the idle period into
contention zones with growing eligible sets.  A renewal argument around one
tagged user's successful transmissions then yields the cycle time, and from
it throughput and mean service time.

The coupled unknowns are the per-class attempt probability and average
collision probability; they are solved by damped fixed-point iteration, with
the collision probability averaged over the long-run occupancy of the idle
slots.  Attempts by co-located lower-priority queues at the tagged user's own
station never collide with it (the virtual-collision winner is the
higher-priority queue), which is what distinguishes classes sharing a station
from externally colliding ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ZoneError
from .scenario import SolverConfig, TrafficClassTable
from .timing import ExchangeTimes


@dataclass(frozen=True)
class Zone:
    """A maximal run of idle slots with a fixed eligible-class set."""

    ordinal: int                 # 1-based, nondecreasing along the idle period
    aifs_offset: int             # slots of extra AIFS shared by the boundary classes
    label_ac: int                # largest AC index among the boundary classes
    first_slot: int              # 1-based, inclusive
    last_slot: int               # inclusive
    eligible: tuple[int, ...]    # class indices allowed to transmit here


@dataclass(frozen=True)
class ZoneStructure:
    """Slot-indexed view of the idle period between transmissions."""

    max_idle_slots: int          # smallest cw_max among the classes present
    zones: tuple[Zone, ...]
    zone_of_slot: tuple[int, ...]   # slot n (1-based) -> zone array index


def zone_structure(table: TrafficClassTable) -> ZoneStructure:
    """Partition the idle period into contention zones.

    Fails fast when the idle period cannot reach the slowest class's first
    eligible slot, which would silently disable that class.
    """
    offsets = [tc.aifs_offset for tc in table]
    max_idle = min(table.ac_params(j).cw_max for j in range(len(table)))
    if max_idle <= max(offsets):
        raise ZoneError(
            f"idle period of {max_idle} slots cannot cover AIFS offsets up to "
            f"{max(offsets)}; check cw_max versus AIFSN spread")
    boundaries = sorted(set(offsets))
    zones = []
    for z, off in enumerate(boundaries):
        first = off + 1
        last = boundaries[z + 1] if z + 1 < len(boundaries) else max_idle
        eligible = tuple(j for j, tc in enumerate(table) if tc.aifs_offset <= off)
        label_ac = max(tc.ac for tc in table if tc.aifs_offset == off)
        zones.append(Zone(ordinal=z + 1, aifs_offset=off, label_ac=label_ac,
                          first_slot=first, last_slot=last, eligible=eligible))
    zone_of_slot = [0] * (max_idle + 1)  # slot 0 unused
    for z, zone in enumerate(zones):
        for s in range(zone.first_slot, zone.last_slot + 1):
            zone_of_slot[s] = z
    return ZoneStructure(max_idle_slots=max_idle, zones=tuple(zones),
                         zone_of_slot=tuple(zone_of_slot))


def zone_collision_prob(j: int, zone: Zone, attempt, table: TrafficClassTable) -> float:
    """Probability that an attempt by class ``j`` in ``zone`` collides.

    The numerator is the chance that no eligible queue attempts in the slot;
    the attempts that cannot hurt the tagged user (its own queue and its
    station's lower-priority queues, which lose the virtual collision to it)
    are divided back out.
    """
    if j not in zone.eligible:
        raise ValueError(f"class {j} is not eligible in zone {zone.ordinal}")
    silent = 1.0
    for jp in zone.eligible:
        silent *= (1.0 - attempt[jp]) ** table[jp].flow_count
    harmless = 1.0
    for jp in table.siblings(j):
        if table[jp].ac <= table[j].ac and jp in zone.eligible:
            harmless *= 1.0 - attempt[jp]
    return 1.0 - silent / harmless


def zone_transmission_prob(zone: Zone, attempt, table: TrafficClassTable) -> float:
    """Probability that at least one queue attempts in a slot of ``zone``."""
    silent = 1.0
    for jp in zone.eligible:
        silent *= (1.0 - attempt[jp]) ** table[jp].flow_count
    return 1.0 - silent


def slot_occupancy(structure: ZoneStructure, p_tr) -> np.ndarray:
    """Long-run occupancy of idle slots 1..max_idle_slots.

    Slot n is reached only if no transmission occurred in slots 1..n-1, and
    any transmission restarts the count at slot 1, so the occupancy is the
    normalized running product of per-slot silence probabilities.
    """
    p_tr = np.asarray(p_tr, dtype=float)
    if np.any((p_tr < 0) | (p_tr > 1)):
        raise ValueError("transmission probabilities must lie in [0, 1]")
    zone_idx = np.asarray(structure.zone_of_slot[1:])
    q = 1.0 - p_tr[zone_idx]
    raw = np.empty(structure.max_idle_slots)
    raw[0] = 1.0
    np.cumprod(q[:-1], out=raw[1:])
    return raw / raw.sum()


def average_collision_prob(j: int, occupancy, per_slot_pc, first_slot: int) -> float:
    """Occupancy-weighted collision probability over the eligible slots."""
    occupancy = np.asarray(occupancy, dtype=float)
    per_slot_pc = np.asarray(per_slot_pc, dtype=float)
    if first_slot > occupancy.shape[0]:
        raise ValueError(f"class has no eligible slot (first would be {first_slot})")
    w = occupancy[first_slot - 1:]
    return float(np.dot(w, per_slot_pc[first_slot - 1:]) / w.sum())


def mean_backoff_slots(p_col: float, cw_min: int, cw_max: int, retry: int) -> float:
    """Expected backoff slots per access attempt under collision prob ``p_col``.

    Stage k draws uniformly from a window that doubles each retry until it
    caps; the expectation conditions on the packet not being dropped.
    """
    if not 0.0 <= p_col < 1.0:
        raise ValueError("collision probability must lie in [0, 1)")
    total = 0.0
    for k in range(1, retry + 1):
        window = min(2 ** (k - 1) * (cw_min + 1), cw_max + 1) - 1
        total += p_col ** (k - 1) * (1.0 - p_col) * window / 2.0
    return total / (1.0 - p_col ** retry)


@dataclass(frozen=True)
class SaturationSolution:
    """Fixed-point outputs plus the assembled cycle-time decomposition."""

    flow_counts: tuple[int, ...]
    attempt_prob: tuple[float, ...]
    collision_prob: tuple[float, ...]
    drop_prob: tuple[float, ...]
    backoff_slots: tuple[float, ...]
    success_share: tuple[float, ...]      # per-user share of successful slots
    cycle_time: tuple[float, ...]         # us
    success_time: tuple[float, ...]       # us spent in successes per cycle
    collision_time: tuple[float, ...]     # us spent in collisions per cycle
    idle_time: tuple[float, ...]          # us spent idle per cycle
    throughput: tuple[float, ...]         # normalized airtime share
    service_time: tuple[float, ...]       # us
    mean_collision_size: float
    occupancy: tuple[float, ...]
    iterations: int
    residual: float

    def success_count(self, j_from: int, j_in: int) -> float:
        """Expected successes of one class inside another class's cycle."""
        return (self.flow_counts[j_from] * self.success_share[j_from]
                / self.success_share[j_in])


def _collision_times(table, structure, times, eligible, flows, attempt,
                     silent, pc_zone, zone_mass):
    """Per-class expected collision duration.

    With equal payloads (or RTS/CTS, where the handshake frame sets the cost)
    this is just the static per-class value.  With heterogeneous payloads
    under basic access, a collision lasts as long as its longest participant,
    so the cost is the expectation of the longest colliding frame conditioned
    on the tagged class colliding, averaged over zones by where its
    collisions actually happen.
    """
    n = len(table)
    static = np.asarray(times.collision, dtype=float)
    payload = np.asarray(times.payload, dtype=float)
    if times.access != "basic" or np.allclose(payload, payload[0]):
        return static
    out = np.empty(n)
    for j, tc in enumerate(table):
        overhead = times.ack_timeout_us[tc.ac] + times.aifs_us[tc.ac]
        harmless = {jp for jp in table.siblings(j) if table[jp].ac <= tc.ac}
        acc = 0.0
        wsum = 0.0
        for z, zone in enumerate(structure.zones):
            if not eligible[j, z] or pc_zone[j, z] <= 0.0:
                continue
            counts = {}
            for jp in zone.eligible:
                m = table[jp].flow_count - (1 if jp in harmless else 0)
                if m > 0:
                    counts[jp] = m
            silent_all = 1.0
            for jp, m in counts.items():
                silent_all *= (1.0 - attempt[jp]) ** m
            p_any = 1.0 - silent_all
            if p_any <= 1e-15:
                continue
            # P(longest harmful colliding frame <= D) for each duration level
            levels = sorted({payload[jp] for jp in counts})
            expect = 0.0
            prev_cdf = 0.0
            for level in levels:
                no_longer = 1.0
                for jp, m in counts.items():
                    if payload[jp] > level:
                        no_longer *= (1.0 - attempt[jp]) ** m
                cdf = (no_longer - silent_all) / p_any
                expect += max(level, payload[j]) * (cdf - prev_cdf)
                prev_cdf = cdf
            w = zone_mass[z] * pc_zone[j, z]
            acc += w * expect
            wsum += w
        out[j] = acc / wsum + overhead if wsum > 0.0 else static[j]
    return out


def _zone_quantities(table, structure, eligible, flows, attempt):
    """Silence product, per-(class, zone) collision prob, zone masses."""
    silent_user = (1.0 - attempt) ** flows
    silent = np.array([np.prod(silent_user[list(z.eligible)])
                       for z in structure.zones])
    harmless = np.ones((len(flows), len(structure.zones)))
    for j in range(len(flows)):
        own = [jp for jp in table.siblings(j) if table[jp].ac <= table[j].ac]
        for z, zone in enumerate(structure.zones):
            f = 1.0
            for jp in own:
                if jp in zone.eligible:
                    f *= 1.0 - attempt[jp]
            harmless[j, z] = f
    pc_zone = np.where(eligible, 1.0 - silent[None, :] / harmless, 0.0)
    occ = slot_occupancy(structure, 1.0 - silent)
    zone_mass = np.array([occ[z.first_slot - 1:z.last_slot].sum()
                          for z in structure.zones])
    return silent, pc_zone, occ, zone_mass


def solve_fixed_point(table: TrafficClassTable, times: ExchangeTimes,
                      config: SolverConfig | None = None) -> SaturationSolution:
    """Solve the coupled attempt/collision probabilities, then assemble the
    cycle-time decomposition, throughput, and mean service time per class."""
    config = config or SolverConfig()
    structure = zone_structure(table)
    n = len(table)
    flows = np.array([tc.flow_count for tc in table], dtype=float)
    cw_min = [table.ac_params(j).cw_min for j in range(n)]
    cw_max = [table.ac_params(j).cw_max for j in range(n)]
    retry = np.array([table.ac_params(j).retry_limit for j in range(n)])
    eligible = np.array([[j in z.eligible for z in structure.zones]
                         for j in range(n)])

    first_zone = np.array([int(np.argmax(eligible[j])) for j in range(n)])

    def collision_avg(pc_zone, zone_mass):
        num = (pc_zone * eligible) @ zone_mass
        den = eligible @ zone_mass
        # occupancy can underflow to zero past a near-certainly-busy slot;
        # such a class only ever sees its first eligible zone
        fallback = pc_zone[np.arange(n), first_zone]
        safe = den > 0.0
        ratio = np.where(safe, num / np.where(safe, den, 1.0), fallback)
        return np.clip(ratio, 0.0, 1.0 - 1e-15)

    attempt = 2.0 / (np.array(cw_min, dtype=float) + 2.0)
    residual = np.inf
    iterations = 0
    converged = False
    while iterations < config.max_iterations:
        iterations += 1
        silent, pc_zone, occ, zone_mass = _zone_quantities(
            table, structure, eligible, flows, attempt)
        p_col = collision_avg(pc_zone, zone_mass)
        backoff = np.array([mean_backoff_slots(p_col[j], cw_min[j], cw_max[j],
                                               int(retry[j])) for j in range(n)])
        attempt_new = 1.0 / (backoff + 1.0)
        residual = float(np.max(np.abs(attempt_new - attempt)))
        attempt = (1.0 - config.damping) * attempt + config.damping * attempt_new
        if residual < config.tolerance:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"saturation fixed point did not converge after {iterations} "
            f"iterations (residual {residual:.3e})",
            residual=residual, iterations=iterations)

    # Re-evaluate everything once at the converged attempt vector.
    silent, pc_zone, occ, zone_mass = _zone_quantities(
        table, structure, eligible, flows, attempt)
    p_col = collision_avg(pc_zone, zone_mass)
    backoff = np.array([mean_backoff_slots(p_col[j], cw_min[j], cw_max[j],
                                           int(retry[j])) for j in range(n)])

    # Chance per zone that a specific class lands a clean transmission.
    p_succ = np.where(eligible,
                      flows[:, None] * attempt[:, None] * (1.0 - pc_zone), 0.0)
    share_num = (p_succ @ zone_mass) / flows
    share_den = float(p_succ.sum(axis=0) @ zone_mass)
    if share_den <= 0.0:
        raise ConvergenceError(
            "jammed contention state: success probability underflows to zero",
            residual=residual, iterations=iterations)
    success_share = share_num / share_den        # sums to 1 when scaled by flows

    # a zero success share (class starved of occupancy mass in a transient
    # probe state) legitimately yields an infinite cycle time
    with np.errstate(divide="ignore", invalid="ignore"):
        t_suc_all = float(np.dot(flows * success_share, times.success))
        t_suc = t_suc_all / success_share

        # Mean number of users involved in a collision, occupancy-averaged.
        attempts_mean = eligible.T @ (flows * attempt)
        succ_mass = p_succ.sum(axis=0)
        coll_prob_zone = np.maximum((1.0 - silent) - succ_mass, 0.0)
        per_zone_size = np.where(coll_prob_zone > 1e-12,
                                 (attempts_mean - succ_mass)
                                 / np.maximum(coll_prob_zone, 1e-300), 0.0)
        mean_collision_size = float(np.dot(zone_mass, per_zone_size))

        odds = p_col / (1.0 - p_col)
        t_c = _collision_times(table, structure, times, eligible, flows,
                               attempt, silent, pc_zone, zone_mass)
        # Each collision event involves mean_collision_size users; the
        # per-user collision counts inside a tagged cycle convert to events.
        t_col_all = float(np.dot(flows * success_share * odds, t_c))
        if mean_collision_size > 0.0:
            t_col = t_col_all / (success_share * mean_collision_size)
        else:
            t_col = np.zeros(n)

        t_idle = backoff * (odds + 1.0) * times.slot_time
        t_cyc = t_suc + t_col + t_idle
        throughput = flows * np.asarray(times.payload) / t_cyc
        drop = p_col ** retry
        service = (1.0 - drop) * t_cyc

    return SaturationSolution(
        flow_counts=tuple(int(f) for f in flows),
        attempt_prob=tuple(attempt), collision_prob=tuple(p_col),
        drop_prob=tuple(drop), backoff_slots=tuple(backoff),
        success_share=tuple(success_share), cycle_time=tuple(t_cyc),
        success_time=tuple(t_suc), collision_time=tuple(np.asarray(t_col)),
        idle_time=tuple(t_idle), throughput=tuple(throughput),
        service_time=tuple(service), mean_collision_size=mean_collision_size,
        occupancy=tuple(occ), iterations=iterations, residual=residual)


def service_time(table: TrafficClassTable, times: ExchangeTimes,
                 f_prime, config: SolverConfig | None = None) -> dict[int, float]:
    """Mean service time per class for an overridden active-count vector.

    With a single active queue in the whole BSS there is no contention and the
    frame goes out at AIFS completion, so the service time is the bare
    successful-exchange time.  Otherwise the saturation model runs on the
    reduced table.
    """
    counts = [int(v) for v in f_prime]
    if len(counts) != len(table):
        raise ValueError("active-count vector length mismatch")
    if any(v < 0 for v in counts):
        raise ValueError("active counts must be >= 0")
    total = sum(counts)
    if total < 1:
        raise ValueError("at least one queue must be active")
    if total == 1:
        j = next(i for i, v in enumerate(counts) if v == 1)
        return {j: times.success[j]}
    keep = tuple(j for j, v in enumerate(counts) if v > 0)
    reduced_table = table.with_flow_counts(counts)
    reduced_times = times.reduced(keep)
    solution = solve_fixed_point(reduced_table, reduced_times, config)
    return {j: solution.service_time[i] for i, j in enumerate(keep)}
