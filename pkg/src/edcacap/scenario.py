"""Scenario configuration and traffic-class derivation.

A scenario describes one infrastructure BSS: PHY constants, per-access-category
EDCA parameters, and the stations with their active queues and traffic.  From
it we derive the table of traffic classes that drives every downstream
computation.  A traffic class is one access category conditioned on the full
activity pattern of the station that hosts it: two stations running the same
AC belong to different classes when the rest of their active ACs (or their
traffic) differ, because internal-collision behaviour differs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

from .errors import ScenarioError

AC_COUNT = 4

# Default EDCA parameter set for an 802.11e BSS on a 54/6 Mb/s PHY:
# background data on AC1, video on AC2, voice on AC3.  AC0 is the legacy
# lowest-priority queue and is rarely used in the bundled scenarios.
DEFAULT_ACS: dict[int, "AcParams"] = {}

UP_TO_AC_DEFAULT = {0: 1, 1: 0, 2: 0, 3: 1, 4: 2, 5: 2, 6: 3, 7: 3}

AP_STATION_ID = "ap"


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ScenarioError(path, message)


@dataclass(frozen=True)
class PhyParams:
    """PHY-level constants.  Durations in microseconds, rates in Mb/s."""

    slot_time: float = 9.0
    sifs: float = 10.0
    data_rate: float = 54.0
    basic_rate: float = 6.0
    ofdm_symbol: float = 4.0
    preamble_plus_signal: float = 20.0
    signal_extension: float = 6.0
    mac_header: int = 30          # bytes, QoS data MAC header including FCS
    ack_frame: int = 14           # bytes
    propagation_delay: float = 1.0

    def validate(self, path: str = "phy") -> None:
        for name in ("slot_time", "sifs", "data_rate", "basic_rate",
                     "ofdm_symbol", "preamble_plus_signal"):
            _require(getattr(self, name) > 0, f"{path}.{name}", "must be > 0")
        _require(self.signal_extension >= 0, f"{path}.signal_extension", "must be >= 0")
        _require(self.propagation_delay >= 0, f"{path}.propagation_delay", "must be >= 0")
        _require(self.mac_header > 0, f"{path}.mac_header", "must be > 0")
        _require(self.ack_frame > 0, f"{path}.ack_frame", "must be > 0")
        _require(self.basic_rate <= self.data_rate,
                 f"{path}.basic_rate", "must not exceed data_rate")


@dataclass(frozen=True)
class AcParams:
    """EDCA parameters of one access category."""

    aifsn: int
    cw_min: int
    cw_max: int
    doublings: int        # number of window-doubling stages to reach cw_max
    retry_limit: int = 7

    @classmethod
    def create(cls, aifsn: int, cw_min: int, cw_max: int | None = None,
               doublings: int | None = None, retry_limit: int = 7,
               path: str = "ac") -> "AcParams":
        """Build parameters from either ``cw_max`` or ``doublings``."""
        _require(aifsn >= 2, f"{path}.aifsn", "must be >= 2")
        _require(cw_min >= 1 and (cw_min + 1) & cw_min == 0,
                 f"{path}.cw_min", "must be a power of two minus one")
        if cw_max is None and doublings is None:
            raise ScenarioError(f"{path}.cw_max", "give cw_max or doublings")
        if doublings is None:
            _require(cw_max >= cw_min, f"{path}.cw_max", "must be >= cw_min")
            doublings = max(0, math.ceil(math.log2((cw_max + 1) / (cw_min + 1))))
        derived_max = (cw_min + 1) * 2 ** doublings - 1
        if cw_max is None:
            cw_max = derived_max
        _require(cw_max == derived_max, f"{path}.cw_max",
                 f"inconsistent with doublings={doublings} (expected {derived_max})")
        _require(retry_limit >= 1, f"{path}.retry_limit", "must be >= 1")
        return cls(aifsn=aifsn, cw_min=cw_min, cw_max=cw_max,
                   doublings=doublings, retry_limit=retry_limit)

    def window(self, stage: int) -> int:
        """Contention window at backoff stage ``stage`` (1-based attempt index)."""
        return min(2 ** (stage - 1) * (self.cw_min + 1), self.cw_max + 1) - 1


DEFAULT_ACS.update({
    0: AcParams.create(aifsn=7, cw_min=31, cw_max=1023, path="default.ac0"),
    1: AcParams.create(aifsn=3, cw_min=31, cw_max=1023, path="default.ac1"),
    2: AcParams.create(aifsn=2, cw_min=15, cw_max=31, path="default.ac2"),
    3: AcParams.create(aifsn=2, cw_min=7, cw_max=15, path="default.ac3"),
})


@dataclass(frozen=True)
class TrafficDescriptor:
    """Traffic feeding one (station, AC) queue.

    ``mean_rate`` and ``mean_packet`` are MAC-level values: the packet size is
    the MSDU handed to the MAC, which for real-time flows already includes the
    40-byte RTP/UDP/IP header.  ``flows`` counts independent flows multiplexed
    into the same queue (used by the AP, which aggregates all downlink flows
    of an AC into a single queue).
    """

    kind: str                         # "saturated" | "cbr" | "trace"
    mean_packet: int                  # bytes
    mean_rate: float = 0.0            # b/s per flow; ignored when saturated
    packet_interval: float | None = None  # ms, cbr only
    trace_path: str | None = None
    flows: int = 1

    def validate(self, path: str) -> None:
        _require(self.kind in ("saturated", "cbr", "trace"), f"{path}.kind",
                 "must be saturated, cbr, or trace")
        _require(self.mean_packet > 0, f"{path}.mean_packet", "must be > 0")
        _require(self.flows >= 1, f"{path}.flows", "must be >= 1")
        if self.kind == "cbr":
            _require(self.packet_interval is not None and self.packet_interval > 0,
                     f"{path}.packet_interval", "required for cbr traffic")
            _require(self.mean_rate > 0, f"{path}.mean_rate", "must be > 0")
            bits = self.mean_rate * self.packet_interval / 1000.0
            _require(abs(bits - 8 * self.mean_packet) <= 0.5 + 1e-6 * bits,
                     f"{path}.mean_rate",
                     "rate x interval must equal 8 x mean_packet")
        elif self.kind == "trace":
            _require(self.trace_path is not None, f"{path}.trace_path",
                     "required for trace traffic")
            _require(self.mean_rate > 0, f"{path}.mean_rate", "must be > 0")
        else:
            _require(self.kind == "saturated", f"{path}.kind", "unknown kind")

    @property
    def saturated(self) -> bool:
        return self.kind == "saturated"

    def arrival_rate(self) -> float:
        """Aggregate packet arrival rate into the queue, packets/s."""
        if self.saturated:
            raise ValueError("saturated traffic has no finite arrival rate")
        return self.flows * self.mean_rate / (8.0 * self.mean_packet)

    def identity(self) -> tuple:
        """Fields that distinguish traffic classes (flow count excluded)."""
        return (self.kind, self.mean_packet, round(self.mean_rate, 9),
                self.packet_interval, self.trace_path, self.flows)


@dataclass(frozen=True)
class StationSpec:
    """One group of identical stations.

    ``count`` collapses identical stations into a single entry; ``station_id``
    ``"ap"`` is reserved for the access point (which must have count 1).
    """

    station_id: str
    traffic: Mapping[int, TrafficDescriptor]
    count: int = 1
    class_tag: str | None = None

    @property
    def activity(self) -> tuple[int, int, int, int]:
        return tuple(1 if i in self.traffic else 0 for i in range(AC_COUNT))

    def validate(self, path: str) -> None:
        _require(self.count >= 1, f"{path}.count", "must be >= 1")
        _require(len(self.traffic) >= 1, f"{path}.traffic",
                 "station must have at least one active AC")
        for ac, desc in self.traffic.items():
            _require(0 <= ac < AC_COUNT, f"{path}.traffic", f"invalid AC index {ac}")
            desc.validate(f"{path}.traffic.ac{ac}")
        if self.station_id == AP_STATION_ID:
            _require(self.count == 1, f"{path}.count", "the AP entry must have count 1")


@dataclass(frozen=True)
class AdmissionConfig:
    rho_threshold: float = 1.0
    weight_truncation_epsilon: float = 1e-6
    up_to_ac: Mapping[int, int] = field(default_factory=lambda: dict(UP_TO_AC_DEFAULT))

    def validate(self, path: str = "admission") -> None:
        _require(0 < self.rho_threshold <= 1.0, f"{path}.rho_threshold",
                 "must be in (0, 1]")
        _require(0 < self.weight_truncation_epsilon < 1e-2,
                 f"{path}.weight_truncation_epsilon", "must be in (0, 1e-2)")
        for up, ac in self.up_to_ac.items():
            _require(0 <= up <= 7 and 0 <= ac < AC_COUNT,
                     f"{path}.up_to_ac", f"invalid mapping {up} -> {ac}")


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-9          # on the attempt-probability fixed point
    max_iterations: int = 10000
    damping: float = 0.5
    rho_tolerance: float = 1e-6      # on the utilization fixed point
    rho_max_iterations: int = 1000

    def validate(self, path: str = "solver") -> None:
        _require(self.tolerance > 0, f"{path}.tolerance", "must be > 0")
        _require(self.max_iterations >= 1, f"{path}.max_iterations", "must be >= 1")
        _require(0 < self.damping <= 1, f"{path}.damping", "must be in (0, 1]")
        _require(self.rho_tolerance > 0, f"{path}.rho_tolerance", "must be > 0")
        _require(self.rho_max_iterations >= 1, f"{path}.rho_max_iterations",
                 "must be >= 1")


@dataclass(frozen=True)
class SimConfig:
    duration_s: float = 100.0
    warmup_s: float = 5.0
    deadline_ms: float = 150.0       # end-to-end, wireless plus wired
    wired_delay_ms: float = 20.0
    buffer_packets: int = 100

    def validate(self, path: str = "sim") -> None:
        _require(self.duration_s > self.warmup_s >= 0, f"{path}.duration_s",
                 "duration must exceed warmup")
        _require(self.deadline_ms > 0, f"{path}.deadline_ms", "must be > 0")
        _require(self.wired_delay_ms >= 0, f"{path}.wired_delay_ms", "must be >= 0")
        _require(self.buffer_packets >= 1, f"{path}.buffer_packets", "must be >= 1")


@dataclass(frozen=True)
class Scenario:
    """Validated, immutable description of one BSS."""

    phy: PhyParams = PhyParams()
    acs: Mapping[int, AcParams] = field(default_factory=lambda: dict(DEFAULT_ACS))
    stations: tuple[StationSpec, ...] = ()
    admission: AdmissionConfig = AdmissionConfig()
    solver: SolverConfig = SolverConfig()
    sim: SimConfig = SimConfig()
    access: str = "basic"            # "basic" | "rts_cts"

    def station(self, station_id: str) -> StationSpec | None:
        for spec in self.stations:
            if spec.station_id == station_id:
                return spec
        return None

    def traffic_classes(self) -> "TrafficClassTable":
        return derive_traffic_classes(self.stations, self.acs)

    def to_document(self) -> dict:
        """Plain-data form matching the file schema (round-trips via load)."""
        acs = []
        for i in range(AC_COUNT):
            ac = self.acs.get(i)
            acs.append(None if ac is None else {
                "aifsn": ac.aifsn, "cw_min": ac.cw_min, "cw_max": ac.cw_max,
                "retry_limit": ac.retry_limit,
            })
        stations = []
        for spec in self.stations:
            traffic = {}
            for ac, desc in sorted(spec.traffic.items()):
                entry = {"kind": desc.kind, "mean_packet": desc.mean_packet}
                if desc.kind != "saturated":
                    entry["mean_rate"] = desc.mean_rate
                if desc.packet_interval is not None:
                    entry["packet_interval"] = desc.packet_interval
                if desc.trace_path is not None:
                    entry["trace_path"] = desc.trace_path
                if desc.flows != 1:
                    entry["flows"] = desc.flows
                traffic[f"ac{ac}"] = entry
            entry = {"id": spec.station_id, "count": spec.count, "traffic": traffic}
            if spec.class_tag is not None:
                entry["class_tag"] = spec.class_tag
            stations.append(entry)
        phy = self.phy
        return {
            "phy": {k: getattr(phy, k) for k in (
                "slot_time", "sifs", "data_rate", "basic_rate", "ofdm_symbol",
                "preamble_plus_signal", "signal_extension", "mac_header",
                "ack_frame", "propagation_delay")},
            "acs": acs,
            "stations": stations,
            "admission": {
                "rho_threshold": self.admission.rho_threshold,
                "weight_truncation_epsilon": self.admission.weight_truncation_epsilon,
                "up_to_ac": dict(self.admission.up_to_ac),
            },
            "solver": {
                "tolerance": self.solver.tolerance,
                "max_iterations": self.solver.max_iterations,
                "damping": self.solver.damping,
                "rho_tolerance": self.solver.rho_tolerance,
                "rho_max_iterations": self.solver.rho_max_iterations,
            },
            "sim": {
                "duration_s": self.sim.duration_s,
                "warmup_s": self.sim.warmup_s,
                "deadline_ms": self.sim.deadline_ms,
                "wired_delay_ms": self.sim.wired_delay_ms,
                "buffer_packets": self.sim.buffer_packets,
            },
            "access": self.access,
        }


@dataclass(frozen=True)
class TrafficClass:
    """One access category conditioned on its station group."""

    index: int
    ac: int                               # access-category index
    activity: tuple[int, int, int, int]   # activity vector of the host station
    group: int                            # station-group id; co-located classes share it
    aifs_offset: int                      # AIFSN minus the smallest active AIFSN
    flow_count: int                       # number of stations hosting this class
    descriptor: TrafficDescriptor
    class_tag: str | None = None

    @property
    def saturated(self) -> bool:
        return self.descriptor.saturated

    def arrival_rate(self) -> float:
        return self.descriptor.arrival_rate()


@dataclass(frozen=True)
class TrafficClassTable:
    """The derived traffic-class universe plus the EDCA parameters in use."""

    classes: tuple[TrafficClass, ...]
    acs: Mapping[int, AcParams]

    def __len__(self) -> int:
        return len(self.classes)

    def __iter__(self):
        return iter(self.classes)

    def __getitem__(self, j: int) -> TrafficClass:
        return self.classes[j]

    def ac_params(self, j: int) -> AcParams:
        return self.acs[self.classes[j].ac]

    def siblings(self, j: int) -> tuple[int, ...]:
        """Indices of classes co-located with class ``j`` (including ``j``)."""
        g = self.classes[j].group
        return tuple(c.index for c in self.classes if c.group == g)

    def with_flow_counts(self, counts: Sequence[int]) -> "TrafficClassTable":
        """Table restricted to classes with a positive count, counts replaced.

        AIFS offsets are re-based on the smallest AIFSN among the remaining
        classes, since idle slots are only meaningful where some queue counts
        them down.
        """
        if len(counts) != len(self.classes):
            raise ValueError("count vector length mismatch")
        kept = [(tc, int(n)) for tc, n in zip(self.classes, counts) if n > 0]
        if not kept:
            raise ValueError("no active traffic classes")
        base = min(self.acs[tc.ac].aifsn for tc, _ in kept)
        classes = tuple(
            replace(tc, index=i, flow_count=n,
                    aifs_offset=self.acs[tc.ac].aifsn - base)
            for i, (tc, n) in enumerate(kept)
        )
        return TrafficClassTable(classes=classes, acs=self.acs)

    def flow_counts(self) -> tuple[int, ...]:
        return tuple(tc.flow_count for tc in self.classes)


def derive_traffic_classes(stations: Iterable[StationSpec],
                           acs: Mapping[int, AcParams]) -> TrafficClassTable:
    """Group stations and expand each group's active ACs into traffic classes.

    Stations merge into one group when their activity vector, class tag and
    per-AC traffic are identical; each group contributes one class per active
    AC, with the group size as the class flow count.  Ordering is
    deterministic: ascending AC index, then lexicographic activity vector,
    then class tag.
    """
    return derive_with_station_map(stations, acs)[0]


def derive_with_station_map(stations: Iterable[StationSpec],
                            acs: Mapping[int, AcParams],
                            ) -> tuple[TrafficClassTable, dict[tuple[int, int], int]]:
    """As :func:`derive_traffic_classes`, also returning the lookup from
    (station-spec position, AC index) to class index."""
    stations = list(stations)
    if not stations:
        raise ScenarioError("stations", "at least one station is required")

    groups: dict[tuple, list] = {}
    spec_group_key: list[tuple] = []
    for idx, spec in enumerate(stations):
        spec.validate(f"stations[{idx}]")
        for ac in spec.traffic:
            if ac not in acs:
                raise ScenarioError(f"stations[{idx}].traffic",
                                    f"AC {ac} is active but has no EDCA parameters")
        key = (spec.activity, spec.class_tag,
               tuple(sorted((ac, d.identity()) for ac, d in spec.traffic.items())))
        spec_group_key.append(key)
        if key in groups:
            groups[key][1] += spec.count
        else:
            groups[key] = [spec, spec.count, key]

    group_list = sorted(
        groups.values(),
        key=lambda g: (g[0].activity, g[0].class_tag or "",
                       repr(sorted((ac, d.identity())
                                   for ac, d in g[0].traffic.items()))))
    key_to_gid = {entry[2]: gid for gid, entry in enumerate(group_list)}
    active_acs = sorted({ac for spec, _, _ in group_list for ac in spec.traffic})
    aifsn_values = [acs[ac].aifsn for ac in active_acs]
    _require(aifsn_values == sorted(aifsn_values, reverse=True), "acs",
             "AIFSN must be non-increasing in AC index (higher index = higher priority)")
    base_aifsn = min(aifsn_values)

    raw = []
    for gid, (spec, count, _) in enumerate(group_list):
        for ac, desc in spec.traffic.items():
            raw.append((ac, spec.activity, spec.class_tag, gid, count, desc))
    raw.sort(key=lambda r: (r[0], r[1], r[2] or "", r[3]))

    classes = tuple(
        TrafficClass(index=j, ac=ac, activity=activity, group=gid,
                     aifs_offset=acs[ac].aifsn - base_aifsn,
                     flow_count=count, descriptor=desc, class_tag=tag)
        for j, (ac, activity, tag, gid, count, desc) in enumerate(raw)
    )
    gid_ac_to_class = {(tc.group, tc.ac): tc.index for tc in classes}
    station_map = {
        (idx, ac): gid_ac_to_class[(key_to_gid[spec_group_key[idx]], ac)]
        for idx, spec in enumerate(stations) for ac in spec.traffic
    }
    return TrafficClassTable(classes=classes, acs=dict(acs)), station_map


# ---------------------------------------------------------------------------
# Document loading

_PHY_FIELDS = {"slot_time", "sifs", "data_rate", "basic_rate", "ofdm_symbol",
               "preamble_plus_signal", "signal_extension", "mac_header",
               "ack_frame", "propagation_delay"}


def _check_keys(doc: Mapping, allowed: set[str], path: str) -> None:
    extra = set(doc) - allowed
    _require(not extra, path, f"unknown keys: {sorted(extra)}")


def _load_phy(doc: Mapping | None) -> PhyParams:
    if doc is None:
        return PhyParams()
    _require(isinstance(doc, Mapping), "phy", "must be a mapping")
    _check_keys(doc, _PHY_FIELDS, "phy")
    kwargs = {}
    for key, value in doc.items():
        if key in ("mac_header", "ack_frame"):
            _require(isinstance(value, int), f"phy.{key}", "must be an integer")
            kwargs[key] = value
        else:
            _require(isinstance(value, (int, float)), f"phy.{key}", "must be a number")
            kwargs[key] = float(value)
    phy = PhyParams(**kwargs)
    phy.validate()
    return phy


def _load_acs(doc) -> dict[int, AcParams]:
    if doc is None:
        return dict(DEFAULT_ACS)
    _require(isinstance(doc, Sequence) and not isinstance(doc, (str, bytes)),
             "acs", "must be an array of up to 4 entries")
    _require(len(doc) <= AC_COUNT, "acs", f"at most {AC_COUNT} entries")
    acs: dict[int, AcParams] = {}
    for i, entry in enumerate(doc):
        if entry is None:
            continue
        path = f"acs[{i}]"
        _require(isinstance(entry, Mapping), path, "must be a mapping or null")
        _check_keys(entry, {"aifsn", "cw_min", "cw_max", "doublings", "retry_limit"},
                    path)
        for req in ("aifsn", "cw_min"):
            _require(req in entry, f"{path}.{req}", "required")
        acs[i] = AcParams.create(
            aifsn=int(entry["aifsn"]), cw_min=int(entry["cw_min"]),
            cw_max=None if entry.get("cw_max") is None else int(entry["cw_max"]),
            doublings=None if entry.get("doublings") is None else int(entry["doublings"]),
            retry_limit=int(entry.get("retry_limit", 7)), path=path)
    _require(bool(acs), "acs", "at least one AC must be configured")
    return acs


def _load_descriptor(doc: Mapping, path: str, base_dir: Path | None) -> TrafficDescriptor:
    _require(isinstance(doc, Mapping), path, "must be a mapping")
    _check_keys(doc, {"kind", "mean_rate", "mean_packet", "packet_interval",
                      "trace_path", "flows"}, path)
    kind = doc.get("kind")
    _require(kind in ("saturated", "cbr", "trace"), f"{path}.kind",
             "must be saturated, cbr, or trace")
    flows = int(doc.get("flows", 1))
    if kind == "trace":
        trace_path = doc.get("trace_path")
        _require(isinstance(trace_path, str), f"{path}.trace_path", "required")
        resolved = _resolve_trace(trace_path, base_dir, f"{path}.trace_path")
        mean_interval_ms, mean_packet = _trace_means(resolved, f"{path}.trace_path")
        desc = TrafficDescriptor(
            kind="trace", mean_packet=int(round(mean_packet)),
            mean_rate=8.0 * mean_packet / (mean_interval_ms / 1000.0),
            packet_interval=mean_interval_ms, trace_path=str(resolved), flows=flows)
    elif kind == "cbr":
        _require("mean_packet" in doc, f"{path}.mean_packet", "required")
        mean_packet = int(doc["mean_packet"])
        interval = doc.get("packet_interval")
        rate = doc.get("mean_rate")
        _require(interval is not None or rate is not None,
                 f"{path}.packet_interval", "give packet_interval or mean_rate")
        if interval is None:
            interval = 8.0 * mean_packet / float(rate) * 1000.0
        if rate is None:
            rate = 8.0 * mean_packet / (float(interval) / 1000.0)
        desc = TrafficDescriptor(kind="cbr", mean_packet=mean_packet,
                                 mean_rate=float(rate),
                                 packet_interval=float(interval), flows=flows)
    else:
        _require("mean_packet" in doc, f"{path}.mean_packet", "required")
        desc = TrafficDescriptor(kind="saturated", mean_packet=int(doc["mean_packet"]),
                                 flows=flows)
    desc.validate(path)
    return desc


def _resolve_trace(trace_path: str, base_dir: Path | None, path: str) -> Path:
    candidate = Path(trace_path)
    if not candidate.is_absolute() and base_dir is not None:
        candidate = base_dir / candidate
    if not candidate.exists():
        bundled = bundled_scenario_dir() / trace_path
        if bundled.exists():
            candidate = bundled
    _require(candidate.exists(), path, f"trace file not found: {trace_path}")
    return candidate


def _trace_means(resolved: Path, path: str) -> tuple[float, float]:
    intervals, sizes = [], []
    for lineno, line in enumerate(resolved.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        _require(len(parts) == 2, path, f"line {lineno}: expected 'interval_ms bytes'")
        try:
            intervals.append(float(parts[0]))
            sizes.append(float(parts[1]))
        except ValueError:
            raise ScenarioError(path, f"line {lineno}: non-numeric field") from None
    _require(bool(intervals), path, "trace file is empty")
    return sum(intervals) / len(intervals), sum(sizes) / len(sizes)


def _load_station(doc: Mapping, idx: int, base_dir: Path | None) -> StationSpec:
    path = f"stations[{idx}]"
    _require(isinstance(doc, Mapping), path, "must be a mapping")
    _check_keys(doc, {"id", "count", "class_tag", "activity", "traffic"}, path)
    _require("id" in doc, f"{path}.id", "required")
    _require("traffic" in doc and isinstance(doc["traffic"], Mapping),
             f"{path}.traffic", "required mapping of acN entries")
    traffic: dict[int, TrafficDescriptor] = {}
    for key, entry in doc["traffic"].items():
        name = str(key)
        _require(name.startswith("ac") and name[2:].isdigit(),
                 f"{path}.traffic", f"keys must be ac0..ac{AC_COUNT - 1}, got {name!r}")
        ac = int(name[2:])
        _require(0 <= ac < AC_COUNT, f"{path}.traffic", f"invalid AC index {ac}")
        traffic[ac] = _load_descriptor(entry, f"{path}.traffic.{name}", base_dir)
    spec = StationSpec(station_id=str(doc["id"]), traffic=traffic,
                       count=int(doc.get("count", 1)),
                       class_tag=doc.get("class_tag"))
    if "activity" in doc:
        declared = tuple(int(v) for v in doc["activity"])
        _require(declared == spec.activity, f"{path}.activity",
                 f"does not match traffic keys (expected {list(spec.activity)})")
    spec.validate(path)
    return spec


def load_scenario(doc: Mapping, base_dir: Path | None = None) -> Scenario:
    """Validate a configuration document and apply defaults."""
    _require(isinstance(doc, Mapping), "", "document must be a mapping")
    _check_keys(doc, {"phy", "acs", "stations", "admission", "solver", "sim",
                      "access"}, "")
    phy = _load_phy(doc.get("phy"))
    acs = _load_acs(doc.get("acs"))

    stations_doc = doc.get("stations", [])
    _require(isinstance(stations_doc, Sequence), "stations", "must be an array")
    stations = tuple(_load_station(s, i, base_dir) for i, s in enumerate(stations_doc))
    seen: dict[str, int] = {}
    for i, spec in enumerate(stations):
        if spec.station_id in seen:
            raise ScenarioError(f"stations[{i}].id",
                                f"duplicate station id {spec.station_id!r}")
        seen[spec.station_id] = i

    adm_doc = doc.get("admission") or {}
    _check_keys(adm_doc, {"rho_threshold", "weight_truncation_epsilon", "up_to_ac"},
                "admission")
    admission = AdmissionConfig(
        rho_threshold=float(adm_doc.get("rho_threshold", 1.0)),
        weight_truncation_epsilon=float(adm_doc.get("weight_truncation_epsilon", 1e-6)),
        up_to_ac={int(k): int(v) for k, v in
                  (adm_doc.get("up_to_ac") or UP_TO_AC_DEFAULT).items()})
    admission.validate()

    sol_doc = doc.get("solver") or {}
    _check_keys(sol_doc, {"tolerance", "max_iterations", "damping",
                          "rho_tolerance", "rho_max_iterations"}, "solver")
    solver = SolverConfig(
        tolerance=float(sol_doc.get("tolerance", 1e-9)),
        max_iterations=int(sol_doc.get("max_iterations", 10000)),
        damping=float(sol_doc.get("damping", 0.5)),
        rho_tolerance=float(sol_doc.get("rho_tolerance", 1e-6)),
        rho_max_iterations=int(sol_doc.get("rho_max_iterations", 1000)))
    solver.validate()

    sim_doc = doc.get("sim") or {}
    _check_keys(sim_doc, {"duration_s", "warmup_s", "deadline_ms", "wired_delay_ms",
                          "buffer_packets"}, "sim")
    sim = SimConfig(
        duration_s=float(sim_doc.get("duration_s", 100.0)),
        warmup_s=float(sim_doc.get("warmup_s", 5.0)),
        deadline_ms=float(sim_doc.get("deadline_ms", 150.0)),
        wired_delay_ms=float(sim_doc.get("wired_delay_ms", 20.0)),
        buffer_packets=int(sim_doc.get("buffer_packets", 100)))
    sim.validate()

    access = doc.get("access", "basic")
    _require(access in ("basic", "rts_cts"), "access", "must be basic or rts_cts")

    scenario = Scenario(phy=phy, acs=acs, stations=stations, admission=admission,
                        solver=solver, sim=sim, access=access)
    if stations:
        scenario.traffic_classes()  # surfaces cross-station invariant violations
    return scenario


def load_scenario_file(path: str | Path) -> Scenario:
    """Load a YAML scenario file (bundled names resolve without a path)."""
    resolved = resolve_scenario_path(path)
    try:
        doc = yaml.safe_load(resolved.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(str(path), f"invalid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    return load_scenario(doc, base_dir=resolved.parent)


def bundled_scenario_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def resolve_scenario_path(path: str | Path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    bundled = bundled_scenario_dir() / p
    if bundled.exists():
        return bundled
    if not str(path).endswith(".yaml"):
        bundled = bundled_scenario_dir() / f"{path}.yaml"
        if bundled.exists():
            return bundled
    raise ScenarioError(str(path), "scenario file not found")


# ---------------------------------------------------------------------------
# Flow placement helpers (shared by the capacity sweep and admission control)

@dataclass(frozen=True)
class FlowPlacement:
    """One flow to graft onto a scenario."""

    station_id: str            # receiving queue's station; AP_STATION_ID for downlink
    ac: int
    descriptor: TrafficDescriptor


def apply_flows(scenario: Scenario, flows: Sequence[FlowPlacement]) -> Scenario:
    """Return a scenario with the given flows merged into its stations.

    Flows on the same (station, AC) queue multiplex: identical descriptors
    stack their flow counts; differing ones are aggregated into an equivalent
    descriptor preserving total packet rate and mean packet size.
    """
    merged: dict[str, dict[int, TrafficDescriptor]] = {}
    tags: dict[str, str | None] = {}
    counts: dict[str, int] = {}
    order: list[str] = []
    for spec in scenario.stations:
        merged[spec.station_id] = dict(spec.traffic)
        tags[spec.station_id] = spec.class_tag
        counts[spec.station_id] = spec.count
        order.append(spec.station_id)

    for flow in flows:
        sid = flow.station_id
        if sid not in merged:
            merged[sid] = {}
            tags[sid] = None
            counts[sid] = 1
            order.append(sid)
        if counts[sid] != 1:
            raise ScenarioError(f"stations.{sid}",
                                "cannot add flows to a station group with count > 1")
        queue = merged[sid]
        queue[flow.ac] = (_stack(queue[flow.ac], flow.descriptor)
                          if flow.ac in queue else flow.descriptor)

    stations = tuple(StationSpec(station_id=sid, traffic=merged[sid],
                                 count=counts[sid], class_tag=tags[sid])
                     for sid in order)
    return replace(scenario, stations=stations)


def _stack(base: TrafficDescriptor, extra: TrafficDescriptor) -> TrafficDescriptor:
    if base.saturated or extra.saturated:
        raise ScenarioError("traffic", "cannot multiplex flows onto a saturated queue")
    same = (base.kind == extra.kind and base.mean_packet == extra.mean_packet
            and abs(base.mean_rate - extra.mean_rate) < 1e-9
            and base.trace_path == extra.trace_path
            and base.packet_interval == extra.packet_interval)
    if same:
        return replace(base, flows=base.flows + extra.flows)
    # Aggregate heterogeneous flows: keep total packet rate and a
    # packet-rate-weighted mean size; represent as an equivalent cbr stream.
    lam = base.arrival_rate() + extra.arrival_rate()
    mean_packet = int(round((base.arrival_rate() * base.mean_packet
                             + extra.arrival_rate() * extra.mean_packet) / lam))
    flows = base.flows + extra.flows
    interval = flows / lam * 1000.0
    per_flow_rate = 8.0 * mean_packet / (interval / 1000.0)
    return TrafficDescriptor(kind="cbr", mean_packet=mean_packet,
                             mean_rate=per_flow_rate, packet_interval=interval,
                             flows=flows)
