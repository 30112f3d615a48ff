"""Discrete-event simulation of an EDCA BSS.

The engine advances from transmission to transmission instead of ticking
slots: during an idle period every backlogged queue's transmit instant is a
closed-form function of its AIFS and remaining backoff, so the next channel
event is the minimum over queues, and intervening idle slots are settled in
one step.  Arrivals interleave through a calendar heap.  All times are
integer nanoseconds, which keeps slot alignment and tie detection exact.

Semantics: a queue senses AIFS after every busy period and decrements its
backoff once per idle slot boundary, including the boundary at which the
medium goes busy (the slot preceding that boundary was idle, and the
carrier-sense decision acts on the previous slot); it then freezes, doubles
its window up to the cap on every failed attempt, drops the packet at the
retry limit, and resets the window after success or drop.  A packet arriving
to an empty queue on an idle medium transmits at AIFS completion without
backoff.  Simultaneous attempts from one station are resolved in favour of
the highest AC; the losers behave exactly as if they had collided on air.
"""

from __future__ import annotations

import csv
import heapq
import random
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .scenario import Scenario, derive_with_station_map
from .timing import CTS_BYTES, RTS_BYTES, frame_duration

US = 1000  # ns per microsecond

EMPTY, BACKOFF, IMMEDIATE = 0, 1, 2

_SLOT_VISIT_CAP = 2048
_DELAY_BIN_US = 1000          # 1 ms histogram bins
_DELAY_BIN_COUNT = 501        # 0..500 ms plus implicit overflow in the last bin


class _Queue:
    __slots__ = ("index", "station", "ac", "tc", "aifs_ns", "offset", "cw_min",
                 "cw_max", "retry", "saturated", "fixed_payload", "buffer",
                 "hol", "hol_start", "first_attempt", "stage", "backoff",
                 "mode", "imm_time", "is_ap")

    def __init__(self, index, station, ac, tc, aifs_ns, offset, cw_min, cw_max,
                 retry, saturated, fixed_payload, is_ap):
        self.index = index
        self.station = station
        self.ac = ac
        self.tc = tc
        self.aifs_ns = aifs_ns
        self.offset = offset
        self.cw_min = cw_min
        self.cw_max = cw_max
        self.retry = retry
        self.saturated = saturated
        self.fixed_payload = fixed_payload
        self.is_ap = is_ap
        self.buffer = []
        self.hol = None            # (enqueue_ns, payload_bytes, counted)
        self.hol_start = 0
        self.first_attempt = -1
        self.stage = 1
        self.backoff = 0
        self.mode = EMPTY
        self.imm_time = 0

    def window(self, stage: int) -> int:
        return min(2 ** (stage - 1) * (self.cw_min + 1), self.cw_max + 1) - 1


@dataclass(frozen=True)
class ClassMetrics:
    arrived: int
    delivered: int
    retry_drops: int
    buffer_drops: int
    sink_drops: int
    residual: int
    attempts: int
    collided_attempts: int
    throughput: float                 # delivered-frame airtime fraction
    mean_service_us: float            # head-of-line to success or drop
    mean_access_delay_us: float       # enqueue to delivery, delivered packets
    delay_p50_us: float
    delay_p95_us: float
    delay_p99_us: float
    loss_ratio: float
    delay_histogram: tuple[int, ...]  # 1 ms bins over delivered packets

    @property
    def wireless_delay_ms(self) -> float:
        return self.mean_access_delay_us / 1000.0


@dataclass(frozen=True)
class SimMetrics:
    seed: int
    duration_s: float
    warmup_s: float
    per_class: tuple[ClassMetrics, ...]
    internal_collisions: int
    external_collisions: int
    slot_visits: tuple[int, ...]
    activity: dict[int, tuple[float, ...]] | None  # class -> active-count pdf

    @property
    def total_throughput(self) -> float:
        return sum(m.throughput for m in self.per_class)


class _Stats:
    def __init__(self, n_classes: int):
        self.arrived = [0] * n_classes
        self.delivered = [0] * n_classes
        self.retry_drops = [0] * n_classes
        self.buffer_drops = [0] * n_classes
        self.sink_drops = [0] * n_classes
        self.attempts = [0] * n_classes
        self.collided = [0] * n_classes
        self.air_ns = [0] * n_classes
        self.service_sum = [0] * n_classes
        self.service_n = [0] * n_classes
        self.delays = [[] for _ in range(n_classes)]
        self.internal = 0
        self.external = 0
        self.slot_visits = np.zeros(_SLOT_VISIT_CAP, dtype=np.int64)
        self.activity: dict[int, dict[int, int]] = {}


def run(scenario: Scenario, duration_s: float | None = None, seed: int = 0,
        deadline_ms: float | None = None, wired_delay_ms: float | None = None,
        buffer_packets: int | None = None, collect_activity: bool = False,
        packet_trace: str | None = None, event_hook=None) -> SimMetrics:
    """Simulate the scenario and return steady-state per-class metrics.

    Deterministic for a fixed (scenario, seed, options) tuple.  The warmup
    prefix configured in the scenario is excluded from every metric.
    """
    sim = scenario.sim
    duration_s = sim.duration_s if duration_s is None else duration_s
    deadline_ms = sim.deadline_ms if deadline_ms is None else deadline_ms
    wired_delay_ms = sim.wired_delay_ms if wired_delay_ms is None else wired_delay_ms
    cap = sim.buffer_packets if buffer_packets is None else buffer_packets
    if duration_s <= sim.warmup_s:
        raise ValueError("duration must exceed the warmup")

    table, station_map = derive_with_station_map(scenario.stations, scenario.acs)
    phy = scenario.phy
    rng = random.Random(seed)

    slot = round(phy.slot_time * US)
    sifs = round(phy.sifs * US)
    delta = round(phy.propagation_delay * US)
    t_ack = round(frame_duration(phy.ack_frame, phy.basic_rate, phy) * US)
    t_cts = round(frame_duration(CTS_BYTES, phy.basic_rate, phy) * US)
    t_rts = round(frame_duration(RTS_BYTES, phy.basic_rate, phy) * US)
    ack_timeout = sifs + t_ack + slot
    cts_timeout = sifs + t_cts + slot
    rts_mode = scenario.access == "rts_cts"

    airtime_cache: dict[int, int] = {}

    def data_air(payload: int) -> int:
        a = airtime_cache.get(payload)
        if a is None:
            a = round(frame_duration(phy.mac_header + payload, phy.data_rate, phy) * US)
            airtime_cache[payload] = a
        return a

    def success_busy(payload: int) -> int:
        if rts_mode:
            return (t_rts + delta + sifs + t_cts + delta + sifs
                    + data_air(payload) + delta + sifs + t_ack + delta)
        return data_air(payload) + delta + sifs + t_ack + delta

    # --- build queues and traffic sources -----------------------------------
    min_aifsn = min(scenario.acs[tc.ac].aifsn for tc in table)
    aifs_min = sifs + min_aifsn * slot
    queues: list[_Queue] = []
    arrivals: list = []          # heap of (time_ns, seq, flow_id)
    flows: list[tuple] = []      # (queue, interval_ns or None, payload, trace, pos)
    seq = 0

    station_counter = 0
    for spec_idx, spec in enumerate(scenario.stations):
        for _ in range(spec.count):
            sid = station_counter
            station_counter += 1
            for ac in sorted(spec.traffic):
                desc = spec.traffic[ac]
                params = scenario.acs[ac]
                q = _Queue(index=len(queues), station=sid, ac=ac,
                           tc=station_map[(spec_idx, ac)],
                           aifs_ns=sifs + params.aifsn * slot,
                           offset=params.aifsn - min_aifsn,
                           cw_min=params.cw_min, cw_max=params.cw_max,
                           retry=params.retry_limit,
                           saturated=desc.saturated,
                           fixed_payload=desc.mean_packet,
                           is_ap=spec.station_id == "ap")
                queues.append(q)
                if desc.saturated:
                    continue
                if desc.kind == "trace":
                    records = _load_trace(desc.trace_path)
                else:
                    records = None
                interval = (None if records is not None
                            else round(desc.packet_interval * 1e6))
                for _ in range(desc.flows):
                    fid = len(flows)
                    if records is not None:
                        pos = rng.randrange(len(records))
                        first = rng.randrange(records[pos][0]) if records[pos][0] else 0
                        flows.append([q, None, 0, records, pos])
                    else:
                        first = rng.randrange(interval)
                        flows.append([q, interval, desc.mean_packet, None, 0])
                    heapq.heappush(arrivals, (first, seq, fid))
                    seq += 1

    end_ns = round(duration_s * 1e9)
    warmup_ns = round(sim.warmup_s * 1e9)
    deadline_ns = round(deadline_ms * 1e6)
    wired_ns = round(wired_delay_ms * 1e6)

    stats = _Stats(len(table))
    nonempty = 0
    active: set[_Queue] = set()
    trace_rows = [] if packet_trace else None

    def counted(t: int) -> bool:
        return warmup_ns <= t < end_ns

    def sample_activity(q: _Queue, t: int) -> None:
        if collect_activity and counted(t):
            hist = stats.activity.setdefault(q.tc, {})
            hist[nonempty] = hist.get(nonempty, 0) + 1

    def start_service(q: _Queue, packet, t: int) -> None:
        q.hol = packet
        q.hol_start = t
        q.first_attempt = -1
        q.stage = 1
        sample_activity(q, t)

    def finish_packet(q: _Queue, t: int, delivered: bool) -> None:
        nonlocal nonempty
        enq, payload, is_counted = q.hol
        if is_counted:
            j = q.tc
            stats.service_n[j] += 1
            stats.service_sum[j] += t - q.hol_start
            if delivered:
                stats.delivered[j] += 1
                stats.air_ns[j] += data_air(payload)
                delay = t - enq
                stats.delays[j].append(delay)
                if delay + wired_ns > deadline_ns:
                    stats.sink_drops[j] += 1
            else:
                stats.retry_drops[j] += 1
        if trace_rows is not None:
            trace_rows.append((enq, q.first_attempt, t,
                               "success" if delivered else "drop", q.stage, q.tc))
        # advance to the next head-of-line packet
        if q.saturated:
            packet = (t, q.fixed_payload, counted(t))
            if packet[2]:
                stats.arrived[q.tc] += 1
            start_service(q, packet, t)
            q.backoff = rng.randint(0, q.cw_min)
            q.mode = BACKOFF
        elif q.buffer:
            start_service(q, q.buffer.pop(0), t)
            q.backoff = rng.randint(0, q.cw_min)
            q.mode = BACKOFF
        else:
            q.hol = None
            q.mode = EMPTY
            active.discard(q)
            nonempty -= 1

    def fail_attempt(q: _Queue, t: int) -> None:
        if q.stage >= q.retry:
            finish_packet(q, t, delivered=False)
        else:
            q.stage += 1
            q.backoff = rng.randint(0, q.window(q.stage))
            q.mode = BACKOFF

    def enqueue(q: _Queue, packet, t: int, channel_idle: bool,
                free_ref: int) -> None:
        nonlocal nonempty
        if packet[2]:
            stats.arrived[q.tc] += 1
        if q.hol is None:
            nonempty += 1
            active.add(q)
            start_service(q, packet, t)
            if channel_idle:
                q.mode = IMMEDIATE
                q.imm_time = max(t, free_ref + q.aifs_ns)
            else:
                q.backoff = rng.randint(0, q.cw_min)
                q.mode = BACKOFF
        elif 1 + len(q.buffer) < cap:
            q.buffer.append(packet)
        elif packet[2]:
            stats.buffer_drops[q.tc] += 1

    def pop_arrival(t_limit: int, channel_idle: bool, free_ref: int) -> bool:
        """Process the earliest arrival if it happens before ``t_limit``."""
        nonlocal seq
        if not arrivals or arrivals[0][0] >= t_limit:
            return False
        t, _, fid = heapq.heappop(arrivals)
        flow = flows[fid]
        q = flow[0]
        if flow[3] is not None:
            records = flow[3]
            interval, payload = records[flow[4]]
            flow[4] = (flow[4] + 1) % len(records)
            heapq.heappush(arrivals, (t + interval, seq, fid))
        else:
            payload = flow[2]
            heapq.heappush(arrivals, (t + flow[1], seq, fid))
        seq += 1
        if t < end_ns:
            enqueue(q, (t, payload, counted(t)), t, channel_idle, free_ref)
        return True

    # saturated queues start backlogged at time zero
    for q in queues:
        if q.saturated:
            packet = (0, q.fixed_payload, counted(0))
            if packet[2]:
                stats.arrived[q.tc] += 1
            nonempty += 1
            active.add(q)
            start_service(q, packet, 0)
            q.backoff = rng.randint(0, q.cw_min)
            q.mode = BACKOFF

    free_ref = 0

    # --- main loop: one iteration per channel transmission ------------------
    while True:
        s_min = None
        t_imm = None
        for q in active:
            if q.mode == BACKOFF:
                s = q.offset + q.backoff
                if s_min is None or s < s_min:
                    s_min = s
            else:
                if t_imm is None or q.imm_time < t_imm:
                    t_imm = q.imm_time
        t_grid = None if s_min is None else free_ref + aifs_min + s_min * slot
        if t_grid is None:
            t_tx = t_imm
        elif t_imm is None:
            t_tx = t_grid
        else:
            t_tx = min(t_grid, t_imm)

        if pop_arrival(end_ns if t_tx is None else min(t_tx, end_ns),
                       channel_idle=True, free_ref=free_ref):
            continue
        if t_tx is None or t_tx >= end_ns:
            break

        # identify transmitters; settle everyone else's backoff bookkeeping
        elapsed = (t_tx - free_ref - aifs_min) // slot
        winners = []
        interrupted = []
        for q in active:
            if q.mode == BACKOFF:
                if t_tx == t_grid and q.offset + q.backoff == elapsed:
                    winners.append(q)
                else:
                    # the busy-onset boundary itself decrements: the slot
                    # preceding it was idle for every queue past its AIFS
                    dec = elapsed - q.offset + 1
                    if dec > 0:
                        q.backoff -= dec if dec < q.backoff else q.backoff
            else:
                if q.imm_time == t_tx:
                    winners.append(q)
                else:
                    interrupted.append(q)
        if counted(t_tx):
            visits = min(elapsed + 1, _SLOT_VISIT_CAP)
            if visits > 0:
                stats.slot_visits[:visits] += 1
        for q in sorted(interrupted, key=lambda q: q.index):
            q.backoff = rng.randint(0, q.cw_min)
            q.mode = BACKOFF

        winners.sort(key=lambda q: (q.station, -q.ac))
        on_air = []
        internal_losers = []
        last_station = -1
        for q in winners:
            if q.first_attempt < 0:
                q.first_attempt = t_tx
            if q.station != last_station:
                on_air.append(q)
                last_station = q.station
            else:
                internal_losers.append(q)

        in_window = counted(t_tx)
        if event_hook is not None:
            event_hook(t_tx, free_ref, elapsed, on_air, internal_losers)
        if in_window:
            for q in winners:
                stats.attempts[q.tc] += 1
        success = len(on_air) == 1
        if success:
            busy_end = t_tx + success_busy(on_air[0].hol[1])
        elif rts_mode:
            busy_end = t_tx + t_rts + cts_timeout
        else:
            busy_end = t_tx + max(data_air(q.hol[1]) for q in on_air) + ack_timeout
        # arrivals during the busy period land before the outcome settles, so
        # activity sampled at the completion instant sees them
        while pop_arrival(busy_end, channel_idle=False, free_ref=busy_end):
            pass
        if success:
            if in_window:
                stats.internal += len(internal_losers)
                for loser in internal_losers:
                    stats.collided[loser.tc] += 1
            finish_packet(on_air[0], busy_end, delivered=True)
        else:
            if in_window:
                stats.external += 1
                stats.internal += len(internal_losers)
                for loser in winners:
                    stats.collided[loser.tc] += 1
            for q in on_air:
                fail_attempt(q, busy_end)
        for q in internal_losers:
            fail_attempt(q, busy_end)
        free_ref = busy_end

    # --- finalize ------------------------------------------------------------
    measure_ns = end_ns - warmup_ns
    per_class = []
    residuals = [0] * len(table)
    for q in queues:
        pending = ([q.hol] if q.hol else []) + q.buffer
        residuals[q.tc] += sum(1 for p in pending if p[2])
    for j in range(len(table)):
        delays = np.array(stats.delays[j], dtype=float)
        delivered = stats.delivered[j]
        arrived = stats.arrived[j]
        lost = stats.retry_drops[j] + stats.buffer_drops[j] + stats.sink_drops[j]
        hist = np.zeros(_DELAY_BIN_COUNT, dtype=np.int64)
        if delivered:
            bins = np.minimum(delays / (US * _DELAY_BIN_US),
                              _DELAY_BIN_COUNT - 1).astype(np.int64)
            np.add.at(hist, bins, 1)
            p50, p95, p99 = np.percentile(delays, [50, 95, 99]) / US
            mean_delay = float(delays.mean()) / US
        else:
            p50 = p95 = p99 = 0.0
            mean_delay = 0.0
        per_class.append(ClassMetrics(
            arrived=arrived, delivered=delivered,
            retry_drops=stats.retry_drops[j], buffer_drops=stats.buffer_drops[j],
            sink_drops=stats.sink_drops[j], residual=residuals[j],
            attempts=stats.attempts[j], collided_attempts=stats.collided[j],
            throughput=stats.air_ns[j] / measure_ns,
            mean_service_us=(stats.service_sum[j] / stats.service_n[j] / US
                             if stats.service_n[j] else 0.0),
            mean_access_delay_us=mean_delay,
            delay_p50_us=float(p50), delay_p95_us=float(p95),
            delay_p99_us=float(p99),
            loss_ratio=lost / arrived if arrived else 0.0,
            delay_histogram=tuple(int(v) for v in hist)))

    activity = None
    if collect_activity:
        activity = {}
        for j, hist in sorted(stats.activity.items()):
            top = max(hist) if hist else 1
            total = sum(hist.values())
            if total == 0:
                activity[j] = (0.0, 1.0)
                continue
            pdf = [hist.get(k, 0) / total for k in range(top + 1)]
            activity[j] = tuple(pdf)

    if packet_trace:
        with open(packet_trace, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["enqueue_ns", "first_attempt_ns", "completed_ns",
                             "outcome", "attempts", "class"])
            writer.writerows(trace_rows)

    return SimMetrics(seed=seed, duration_s=duration_s, warmup_s=sim.warmup_s,
                      per_class=tuple(per_class),
                      internal_collisions=stats.internal,
                      external_collisions=stats.external,
                      slot_visits=tuple(int(v) for v in stats.slot_visits),
                      activity=activity)


def _load_trace(path: str) -> list[tuple[int, int]]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            interval_ms, payload = line.split()
            records.append((round(float(interval_ms) * 1e6), int(float(payload))))
    if not records:
        raise ValueError(f"empty trace file {path}")
    return records


def capacity_search(build_scenario: Callable[[int], Scenario],
                    loss_threshold: float = 0.01,
                    seeds: Sequence[int] = (1, 2, 3, 4, 5),
                    duration_s: float | None = None,
                    upper_hint: int = 8, hard_limit: int = 4096,
                    ) -> tuple[int, list[dict]]:
    """Largest flow count whose simulated loss stays within the threshold.

    A flow count passes when, for a majority of seeds, every real-time class
    keeps its loss ratio at or below the threshold.  Flow addition is assumed
    monotone, so the boundary is found by doubling then bisection.
    """
    probes: list[dict] = []

    def passes(k: int) -> bool:
        scenario = build_scenario(k)
        table = scenario.traffic_classes()
        realtime = [j for j, tc in enumerate(table) if not tc.saturated]
        ok_seeds = 0
        worst = 0.0
        for i, seed in enumerate(seeds):
            metrics = run(scenario, duration_s=duration_s, seed=seed)
            loss = max(metrics.per_class[j].loss_ratio for j in realtime)
            worst = max(worst, loss)
            if loss <= loss_threshold:
                ok_seeds += 1
            remaining = len(seeds) - i - 1
            majority = len(seeds) // 2 + 1
            if ok_seeds >= majority or ok_seeds + remaining < majority:
                break
        verdict = ok_seeds >= len(seeds) // 2 + 1
        probes.append({"flows": k, "passing_seeds": ok_seeds,
                       "worst_loss": worst, "ok": verdict})
        return verdict

    if not passes(1):
        raise RuntimeError("loss threshold not met even with a single flow")
    lo, hi = 1, max(2, upper_hint)
    while passes(hi):
        lo = hi
        hi *= 2
        if hi > hard_limit:
            raise RuntimeError(f"no capacity boundary below {hard_limit} flows")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo, probes


def activity_histogram(scenario: Scenario, duration_s: float | None = None,
                       seed: int = 0) -> dict[int, tuple[float, ...]]:
    """Empirical pdf of the number of active queues, conditioned on each
    class, sampled whenever one of its queues starts serving a frame."""
    metrics = run(scenario, duration_s=duration_s, seed=seed,
                  collect_activity=True)
    out = dict(metrics.activity or {})
    table = scenario.traffic_classes()
    for j in range(len(table)):
        if j not in out:
            out[j] = (0.0, 1.0)  # never observed active beyond itself
    return out
