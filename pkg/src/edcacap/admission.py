"""Threshold admission control for real-time traffic streams.

The controller keeps the set of admitted streams, rebuilds the BSS scenario
for every candidate set, and admits a new stream only when every real-time
class's utilization stays at or below the configured threshold.  Best-effort
classes are exempt from the test (they are modeled as always active).
Decisions are fail-closed: if the capacity model cannot produce a utilization
vector, the stream is rejected with a diagnostic.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping

import yaml

from .capacity import CapacitySolution, ServiceTimeCache, solve_scenario_utilization
from .errors import ConvergenceError, ScenarioError
from .scenario import (AP_STATION_ID, FlowPlacement, Scenario, TrafficDescriptor,
                       apply_flows)

DIRECTIONS = ("uplink", "downlink")


@dataclass(frozen=True)
class Tspec:
    """Traffic-stream parameters carried by a reservation request.

    ``mean_rate``/``mean_packet`` are MAC-level (the packet size includes the
    40-byte RTP/UDP/IP header of real-time flows).
    """

    tsid: str
    up: int                      # user priority 0..7
    mean_rate: float             # b/s
    mean_packet: int             # bytes
    direction: str               # "uplink" | "downlink"
    station: str                 # source station for uplink; any id for downlink

    def validate(self) -> None:
        if not 0 <= self.up <= 7:
            raise ValueError(f"user priority {self.up} outside 0..7")
        if self.mean_rate <= 0 or self.mean_packet <= 0:
            raise ValueError("mean_rate and mean_packet must be > 0")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")


@dataclass(frozen=True)
class Decision:
    tsid: str
    verdict: str                 # "admit" | "reject" | "delete" | "error"
    reason: str = ""
    max_rho: float | None = None
    binding_class: int | None = None
    utilization: tuple[float, ...] = ()

    @property
    def admitted(self) -> bool:
        return self.verdict == "admit"


@dataclass
class AdmissionState:
    """Snapshot of the controller between decisions."""

    flows: tuple[Tspec, ...]
    rho_threshold: float
    solution: CapacitySolution | None = None


class AdmissionController:
    """Single-writer admission state machine over a base scenario."""

    def __init__(self, base_scenario: Scenario, rho_threshold: float | None = None,
                 cache: ServiceTimeCache | None = None):
        self.base = base_scenario
        self.rho_threshold = (base_scenario.admission.rho_threshold
                              if rho_threshold is None else rho_threshold)
        self.up_to_ac = dict(base_scenario.admission.up_to_ac)
        self.cache = cache or ServiceTimeCache()
        self._flows: dict[str, Tspec] = {}
        self._solution: CapacitySolution | None = None

    @property
    def state(self) -> AdmissionState:
        return AdmissionState(flows=tuple(self._flows.values()),
                              rho_threshold=self.rho_threshold,
                              solution=self._solution)

    def scenario_with(self, flows: Iterable[Tspec]) -> Scenario:
        """Candidate scenario: the base plus the given streams."""
        placements = []
        for ts in flows:
            ac = self.up_to_ac.get(ts.up)
            if ac is None or ac not in self.base.acs:
                raise ScenarioError("tspec.up",
                                    f"user priority {ts.up} maps to no configured AC")
            station = AP_STATION_ID if ts.direction == "downlink" else ts.station
            interval = 8.0 * ts.mean_packet / ts.mean_rate * 1000.0
            desc = TrafficDescriptor(kind="cbr", mean_packet=ts.mean_packet,
                                     mean_rate=ts.mean_rate,
                                     packet_interval=interval)
            placements.append(FlowPlacement(station_id=station, ac=ac,
                                            descriptor=desc))
        return apply_flows(self.base, placements)

    def evaluate(self, flows: Iterable[Tspec]) -> CapacitySolution:
        scenario = self.scenario_with(flows)
        return solve_scenario_utilization(scenario, cache=self.cache)

    def addts(self, tspec: Tspec) -> Decision:
        try:
            tspec.validate()
        except ValueError as exc:
            return Decision(tspec.tsid, "reject", reason=str(exc))
        if tspec.tsid in self._flows:
            return Decision(tspec.tsid, "error", reason="duplicate tsid")
        candidate = dict(self._flows)
        candidate[tspec.tsid] = tspec
        try:
            solution = self.evaluate(candidate.values())
        except ScenarioError as exc:
            return Decision(tspec.tsid, "reject", reason=str(exc))
        except ConvergenceError as exc:
            return Decision(tspec.tsid, "reject",
                            reason=f"capacity model did not converge: {exc}")
        worst, binding = solution.max_real_time_utilization()
        if worst <= self.rho_threshold:
            self._flows = candidate
            self._solution = solution
            return Decision(tspec.tsid, "admit", max_rho=worst,
                            binding_class=binding,
                            utilization=solution.utilization)
        return Decision(tspec.tsid, "reject",
                        reason=f"utilization {worst:.4f} exceeds threshold "
                               f"{self.rho_threshold:.4f}",
                        max_rho=worst, binding_class=binding,
                        utilization=solution.utilization)

    def delts(self, tsid: str) -> Decision:
        if tsid not in self._flows:
            return Decision(tsid, "error", reason="unknown tsid")
        del self._flows[tsid]
        self._solution = None  # stale until the next admission solve
        return Decision(tsid, "delete")

    # -- persistence ---------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "rho_threshold": self.rho_threshold,
            "flows": [
                {"tsid": ts.tsid, "up": ts.up, "mean_rate": ts.mean_rate,
                 "mean_packet": ts.mean_packet, "direction": ts.direction,
                 "station": ts.station}
                for ts in self._flows.values()
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.snapshot(), fh, sort_keys=False)

    @classmethod
    def restore(cls, base_scenario: Scenario, snapshot: Mapping,
                cache: ServiceTimeCache | None = None) -> "AdmissionController":
        ctl = cls(base_scenario, rho_threshold=float(snapshot["rho_threshold"]),
                  cache=cache)
        for entry in snapshot.get("flows", []):
            ts = Tspec(tsid=str(entry["tsid"]), up=int(entry["up"]),
                       mean_rate=float(entry["mean_rate"]),
                       mean_packet=int(entry["mean_packet"]),
                       direction=str(entry["direction"]),
                       station=str(entry["station"]))
            ctl._flows[ts.tsid] = ts
        return ctl


# ---------------------------------------------------------------------------
# Event-stream replay

class EventFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


def parse_event(line: str, lineno: int = 0):
    """Parse one request record.

    Formats: ``ADDTS tsid up dir station R L`` and ``DELTS tsid``.
    """
    parts = line.split()
    if not parts:
        return None
    kind = parts[0].upper()
    if kind == "ADDTS":
        if len(parts) != 7:
            raise EventFormatError(lineno, "ADDTS needs: tsid up dir station R L")
        tsid, up, direction, station, rate, size = parts[1:]
        try:
            tspec = Tspec(tsid=tsid, up=int(up), direction=direction,
                          station=station, mean_rate=float(rate),
                          mean_packet=int(size))
        except ValueError as exc:
            raise EventFormatError(lineno, str(exc)) from exc
        return ("ADDTS", tspec)
    if kind == "DELTS":
        if len(parts) != 2:
            raise EventFormatError(lineno, "DELTS needs: tsid")
        return ("DELTS", parts[1])
    raise EventFormatError(lineno, f"unknown record type {parts[0]!r}")


def replay(controller: AdmissionController, lines: Iterable[str]) -> list[Decision]:
    """Run a request stream in order and return the decision log."""
    decisions = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        event = parse_event(stripped, lineno)
        if event is None:
            continue
        kind, payload = event
        if kind == "ADDTS":
            decisions.append(controller.addts(payload))
        else:
            decisions.append(controller.delts(payload))
    return decisions


def decisions_csv(decisions: Iterable[Decision]) -> str:
    """Render a decision log as CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["tsid", "decision", "max_rho", "binding_tc"])
    for d in decisions:
        writer.writerow([d.tsid, d.verdict,
                         "" if d.max_rho is None else f"{d.max_rho:.6f}",
                         "" if d.binding_class is None else d.binding_class])
    return buf.getvalue()
