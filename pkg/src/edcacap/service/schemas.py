"""Request/response models for the HTTP API.

The scenario schema mirrors the YAML file format; field-level defaults and
cross-field invariants live in the core loader, so models here stay
permissive (optional fields, unknown keys rejected).
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PhyModel(StrictModel):
    slot_time: Optional[float] = None
    sifs: Optional[float] = None
    data_rate: Optional[float] = None
    basic_rate: Optional[float] = None
    ofdm_symbol: Optional[float] = None
    preamble_plus_signal: Optional[float] = None
    signal_extension: Optional[float] = None
    mac_header: Optional[int] = None
    ack_frame: Optional[int] = None
    propagation_delay: Optional[float] = None


class AcModel(StrictModel):
    aifsn: int
    cw_min: int
    cw_max: Optional[int] = None
    doublings: Optional[int] = None
    retry_limit: int = 7


class TrafficModel(StrictModel):
    kind: Literal["saturated", "cbr", "trace"]
    mean_packet: Optional[int] = None
    mean_rate: Optional[float] = None
    packet_interval: Optional[float] = None
    trace_path: Optional[str] = None
    flows: int = 1


class StationModel(StrictModel):
    id: str
    count: int = 1
    class_tag: Optional[str] = None
    activity: Optional[list[int]] = None
    traffic: dict[str, TrafficModel]


class AdmissionModel(StrictModel):
    rho_threshold: Optional[float] = None
    weight_truncation_epsilon: Optional[float] = None
    up_to_ac: Optional[dict[int, int]] = None


class SolverModel(StrictModel):
    tolerance: Optional[float] = None
    max_iterations: Optional[int] = None
    damping: Optional[float] = None
    rho_tolerance: Optional[float] = None
    rho_max_iterations: Optional[int] = None


class SimModel(StrictModel):
    duration_s: Optional[float] = None
    warmup_s: Optional[float] = None
    deadline_ms: Optional[float] = None
    wired_delay_ms: Optional[float] = None
    buffer_packets: Optional[int] = None


class ScenarioModel(StrictModel):
    phy: Optional[PhyModel] = None
    acs: Optional[list[Optional[AcModel]]] = None
    stations: list[StationModel] = Field(default_factory=list)
    admission: Optional[AdmissionModel] = None
    solver: Optional[SolverModel] = None
    sim: Optional[SimModel] = None
    access: Optional[Literal["basic", "rts_cts"]] = None

    def to_document(self) -> dict:
        return self.model_dump(exclude_none=True)


# -- requests ----------------------------------------------------------------

class SolveRequest(StrictModel):
    scenario: ScenarioModel
    access: Optional[Literal["basic", "rts_cts"]] = None


class UtilizationRequest(StrictModel):
    scenario: ScenarioModel
    rho_threshold: Optional[float] = None


class FlowTemplateModel(StrictModel):
    direction: Literal["uplink", "downlink", "two_way"]
    ac: int = 3
    mean_packet: int
    packet_interval: Optional[float] = None
    mean_rate: Optional[float] = None
    station_prefix: str = "flow_sta"


class CapacitySearchRequest(StrictModel):
    scenario: ScenarioModel
    template: FlowTemplateModel
    rho_threshold: Optional[float] = None


class SimulateRequest(StrictModel):
    scenario: ScenarioModel
    duration_s: Optional[float] = None
    seed: int = 0
    collect_activity: bool = False
    deadline_ms: Optional[float] = None
    wired_delay_ms: Optional[float] = None
    buffer_packets: Optional[int] = None


class CompareRequest(StrictModel):
    scenario: ScenarioModel
    seeds: list[int] = Field(default_factory=lambda: [1])
    duration_s: Optional[float] = None


class SessionRequest(StrictModel):
    scenario: ScenarioModel
    rho_threshold: Optional[float] = None


class TspecModel(StrictModel):
    tsid: str
    up: int
    mean_rate: float
    mean_packet: int
    direction: Literal["uplink", "downlink"]
    station: str


class DeltsRequest(StrictModel):
    tsid: str


class ReplayRequest(StrictModel):
    events: str                      # newline-separated request records


# -- responses ---------------------------------------------------------------

class ClassInfo(StrictModel):
    index: int
    ac: int
    activity: list[int]
    class_tag: Optional[str]
    stations: int
    flows: int
    aifs_offset: int
    saturated: bool


class SaturationRow(StrictModel):
    index: int
    attempt_prob: float
    collision_prob: float
    drop_prob: float
    backoff_slots: float
    throughput: float
    cycle_time_us: float
    success_time_us: float
    collision_time_us: float
    idle_time_us: float
    service_time_us: float


class SolveResponse(StrictModel):
    classes: list[ClassInfo]
    rows: list[SaturationRow]
    iterations: int
    residual: float


class UtilizationRow(StrictModel):
    index: int
    arrival_rate_pps: float
    service_rate_pps: float
    utilization: float
    saturated: bool


class UtilizationResponse(StrictModel):
    classes: list[ClassInfo]
    rows: list[UtilizationRow]
    iterations: int
    residual: float
    max_real_time_utilization: float
    binding_class: int
    admissible: bool


class ProbeRow(StrictModel):
    flows: int
    max_utilization: float
    binding_class: int
    admissible: bool


class CapacitySearchResponse(StrictModel):
    max_flows: int
    probes: list[ProbeRow]


class SimClassRow(StrictModel):
    index: int
    arrived: int
    delivered: int
    retry_drops: int
    buffer_drops: int
    sink_drops: int
    residual: int
    attempts: int
    collided_attempts: int
    throughput: float
    mean_service_us: float
    mean_access_delay_us: float
    delay_p50_us: float
    delay_p95_us: float
    delay_p99_us: float
    loss_ratio: float


class SimulateResponse(StrictModel):
    seed: int
    duration_s: float
    warmup_s: float
    classes: list[ClassInfo]
    rows: list[SimClassRow]
    internal_collisions: int
    external_collisions: int
    total_throughput: float
    activity: Optional[dict[int, list[float]]] = None


class CompareRow(StrictModel):
    index: int
    throughput_analysis: float
    throughput_sim: float
    throughput_rel_error: float
    service_analysis_us: float
    service_sim_us: float
    service_rel_error: float


class CompareResponse(StrictModel):
    rows: list[CompareRow]
    max_throughput_rel_error: float
    max_service_rel_error: float
    seeds: list[int]


class DecisionModel(StrictModel):
    tsid: str
    verdict: str
    reason: str = ""
    max_rho: Optional[float] = None
    binding_class: Optional[int] = None


class SessionResponse(StrictModel):
    session_id: str


class SessionState(StrictModel):
    session_id: str
    rho_threshold: float
    admitted: list[TspecModel]
    utilization: Optional[list[float]] = None


class ReplayResponse(StrictModel):
    decisions: list[DecisionModel]
    csv: str


class ErrorBody(StrictModel):
    error: str
    detail: str
