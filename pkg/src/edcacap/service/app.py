"""FastAPI service exposing the solver, simulator, and admission control.

Stateless analysis/simulation endpoints take a full scenario per request; the
admission endpoints hold per-session controller state, serialized by a lock
per session (single writer, as admission decisions must be ordered).
"""

from __future__ import annotations

import threading
import uuid

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..admission import AdmissionController, Decision, Tspec, decisions_csv, replay
from ..capacity import (ServiceTimeCache, max_admitted_flows,
                        solve_scenario_utilization)
from ..errors import ConvergenceError, ScenarioError, ZoneError
from ..saturation import solve_fixed_point
from ..scenario import (AP_STATION_ID, FlowPlacement, Scenario,
                        TrafficDescriptor, apply_flows, load_scenario)
from ..simulator import run
from ..timing import exchange_times
from . import schemas as S


def _load(model: S.ScenarioModel, access: str | None = None) -> Scenario:
    doc = model.to_document()
    if access is not None:
        doc["access"] = access
    try:
        return load_scenario(doc)
    except (ScenarioError, ZoneError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _class_info(table) -> list[S.ClassInfo]:
    return [S.ClassInfo(index=tc.index, ac=tc.ac, activity=list(tc.activity),
                        class_tag=tc.class_tag, stations=tc.flow_count,
                        flows=tc.descriptor.flows, aifs_offset=tc.aifs_offset,
                        saturated=tc.saturated)
            for tc in table]


def _template_scenario(base: Scenario, template: S.FlowTemplateModel,
                       count: int) -> Scenario:
    if template.packet_interval is None and template.mean_rate is None:
        raise HTTPException(422, detail="template needs packet_interval or mean_rate")
    interval = template.packet_interval
    if interval is None:
        interval = 8.0 * template.mean_packet / template.mean_rate * 1000.0
    rate = 8.0 * template.mean_packet / (interval / 1000.0)
    desc = TrafficDescriptor(kind="cbr", mean_packet=template.mean_packet,
                             mean_rate=rate, packet_interval=interval)
    flows = []
    if template.direction in ("downlink", "two_way"):
        flows.extend(FlowPlacement(AP_STATION_ID, template.ac, desc)
                     for _ in range(count))
    if template.direction in ("uplink", "two_way"):
        flows.extend(FlowPlacement(f"{template.station_prefix}{i}", template.ac, desc)
                     for i in range(count))
    return apply_flows(base, flows)


class _Session:
    def __init__(self, controller: AdmissionController):
        self.controller = controller
        self.lock = threading.Lock()


def create_app() -> FastAPI:
    app = FastAPI(title="edcacap", version=__version__)
    sessions: dict[str, _Session] = {}

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.post("/api/solve", response_model=S.SolveResponse)
    def solve(req: S.SolveRequest):
        scenario = _load(req.scenario, req.access)
        try:
            table = scenario.traffic_classes()
            times = exchange_times(table, scenario.phy, scenario.access)
            sol = solve_fixed_point(table, times, scenario.solver)
        except (ScenarioError, ZoneError) as exc:
            raise HTTPException(422, detail=str(exc)) from exc
        except ConvergenceError as exc:
            raise HTTPException(409, detail=str(exc)) from exc
        rows = [S.SaturationRow(
            index=j, attempt_prob=sol.attempt_prob[j],
            collision_prob=sol.collision_prob[j], drop_prob=sol.drop_prob[j],
            backoff_slots=sol.backoff_slots[j], throughput=sol.throughput[j],
            cycle_time_us=sol.cycle_time[j], success_time_us=sol.success_time[j],
            collision_time_us=sol.collision_time[j], idle_time_us=sol.idle_time[j],
            service_time_us=sol.service_time[j]) for j in range(len(table))]
        return S.SolveResponse(classes=_class_info(table), rows=rows,
                               iterations=sol.iterations, residual=sol.residual)

    @app.post("/api/utilization", response_model=S.UtilizationResponse)
    def utilization(req: S.UtilizationRequest):
        scenario = _load(req.scenario)
        threshold = (scenario.admission.rho_threshold
                     if req.rho_threshold is None else req.rho_threshold)
        try:
            sol = solve_scenario_utilization(scenario)
        except (ScenarioError, ZoneError, ValueError) as exc:
            raise HTTPException(422, detail=str(exc)) from exc
        except ConvergenceError as exc:
            raise HTTPException(409, detail=str(exc)) from exc
        table = scenario.traffic_classes()
        worst, binding = sol.max_real_time_utilization()
        rows = [S.UtilizationRow(index=j, arrival_rate_pps=sol.arrival_rate[j],
                                 service_rate_pps=sol.service_rate[j],
                                 utilization=sol.utilization[j],
                                 saturated=sol.saturated[j])
                for j in range(len(table))]
        return S.UtilizationResponse(
            classes=_class_info(table), rows=rows, iterations=sol.iterations,
            residual=sol.residual, max_real_time_utilization=worst,
            binding_class=binding, admissible=worst <= threshold)

    @app.post("/api/capacity-search", response_model=S.CapacitySearchResponse)
    def capacity_search_endpoint(req: S.CapacitySearchRequest):
        base = _load(req.scenario)
        threshold = (base.admission.rho_threshold
                     if req.rho_threshold is None else req.rho_threshold)
        cache = ServiceTimeCache()
        try:
            best, probes = max_admitted_flows(
                lambda k: _template_scenario(base, req.template, k),
                rho_threshold=threshold, cache=cache)
        except (ScenarioError, ZoneError, ValueError) as exc:
            raise HTTPException(422, detail=str(exc)) from exc
        return S.CapacitySearchResponse(
            max_flows=best,
            probes=[S.ProbeRow(flows=p.flows, max_utilization=p.max_utilization,
                               binding_class=p.binding_class,
                               admissible=p.admissible) for p in probes])

    @app.post("/api/simulate", response_model=S.SimulateResponse)
    def simulate(req: S.SimulateRequest):
        scenario = _load(req.scenario)
        try:
            metrics = run(scenario, duration_s=req.duration_s, seed=req.seed,
                          deadline_ms=req.deadline_ms,
                          wired_delay_ms=req.wired_delay_ms,
                          buffer_packets=req.buffer_packets,
                          collect_activity=req.collect_activity)
        except (ScenarioError, ZoneError, ValueError) as exc:
            raise HTTPException(422, detail=str(exc)) from exc
        table = scenario.traffic_classes()
        rows = [S.SimClassRow(
            index=j, arrived=c.arrived, delivered=c.delivered,
            retry_drops=c.retry_drops, buffer_drops=c.buffer_drops,
            sink_drops=c.sink_drops, residual=c.residual, attempts=c.attempts,
            collided_attempts=c.collided_attempts, throughput=c.throughput,
            mean_service_us=c.mean_service_us,
            mean_access_delay_us=c.mean_access_delay_us,
            delay_p50_us=c.delay_p50_us, delay_p95_us=c.delay_p95_us,
            delay_p99_us=c.delay_p99_us, loss_ratio=c.loss_ratio)
            for j, c in enumerate(metrics.per_class)]
        activity = None
        if metrics.activity is not None:
            activity = {j: list(pdf) for j, pdf in metrics.activity.items()}
        return S.SimulateResponse(
            seed=metrics.seed, duration_s=metrics.duration_s,
            warmup_s=metrics.warmup_s, classes=_class_info(table), rows=rows,
            internal_collisions=metrics.internal_collisions,
            external_collisions=metrics.external_collisions,
            total_throughput=metrics.total_throughput, activity=activity)

    @app.post("/api/compare", response_model=S.CompareResponse)
    def compare(req: S.CompareRequest):
        scenario = _load(req.scenario)
        try:
            table = scenario.traffic_classes()
            times = exchange_times(table, scenario.phy, scenario.access)
            sol = solve_fixed_point(table, times, scenario.solver)
        except (ScenarioError, ZoneError) as exc:
            raise HTTPException(422, detail=str(exc)) from exc
        except ConvergenceError as exc:
            raise HTTPException(409, detail=str(exc)) from exc
        n = len(table)
        thp = [0.0] * n
        srv = [0.0] * n
        for seed in req.seeds:
            metrics = run(scenario, duration_s=req.duration_s, seed=seed)
            for j, c in enumerate(metrics.per_class):
                thp[j] += c.throughput / len(req.seeds)
                srv[j] += c.mean_service_us / len(req.seeds)
        rows = []
        for j in range(n):
            t_err = abs(thp[j] - sol.throughput[j]) / sol.throughput[j]
            s_err = abs(srv[j] - sol.service_time[j]) / sol.service_time[j]
            rows.append(S.CompareRow(
                index=j, throughput_analysis=sol.throughput[j],
                throughput_sim=thp[j], throughput_rel_error=t_err,
                service_analysis_us=sol.service_time[j], service_sim_us=srv[j],
                service_rel_error=s_err))
        return S.CompareResponse(
            rows=rows,
            max_throughput_rel_error=max(r.throughput_rel_error for r in rows),
            max_service_rel_error=max(r.service_rel_error for r in rows),
            seeds=list(req.seeds))

    # -- admission sessions ---------------------------------------------------

    def _session(session_id: str) -> _Session:
        found = sessions.get(session_id)
        if found is None:
            raise HTTPException(404, detail=f"unknown session {session_id}")
        return found

    def _decision_model(d: Decision) -> S.DecisionModel:
        return S.DecisionModel(tsid=d.tsid, verdict=d.verdict, reason=d.reason,
                               max_rho=d.max_rho, binding_class=d.binding_class)

    @app.post("/api/admission/sessions", response_model=S.SessionResponse)
    def create_session(req: S.SessionRequest):
        scenario = _load(req.scenario)
        controller = AdmissionController(scenario, rho_threshold=req.rho_threshold)
        session_id = uuid.uuid4().hex[:12]
        sessions[session_id] = _Session(controller)
        return S.SessionResponse(session_id=session_id)

    @app.get("/api/admission/sessions/{session_id}", response_model=S.SessionState)
    def session_state(session_id: str):
        session = _session(session_id)
        state = session.controller.state
        util = (list(state.solution.utilization)
                if state.solution is not None else None)
        return S.SessionState(
            session_id=session_id, rho_threshold=state.rho_threshold,
            admitted=[S.TspecModel(tsid=t.tsid, up=t.up, mean_rate=t.mean_rate,
                                   mean_packet=t.mean_packet,
                                   direction=t.direction, station=t.station)
                      for t in state.flows],
            utilization=util)

    @app.post("/api/admission/sessions/{session_id}/addts",
              response_model=S.DecisionModel)
    def addts(session_id: str, req: S.TspecModel):
        session = _session(session_id)
        tspec = Tspec(tsid=req.tsid, up=req.up, mean_rate=req.mean_rate,
                      mean_packet=req.mean_packet, direction=req.direction,
                      station=req.station)
        with session.lock:
            return _decision_model(session.controller.addts(tspec))

    @app.post("/api/admission/sessions/{session_id}/delts",
              response_model=S.DecisionModel)
    def delts(session_id: str, req: S.DeltsRequest):
        session = _session(session_id)
        with session.lock:
            return _decision_model(session.controller.delts(req.tsid))

    @app.post("/api/admission/sessions/{session_id}/replay",
              response_model=S.ReplayResponse)
    def replay_events(session_id: str, req: S.ReplayRequest):
        session = _session(session_id)
        with session.lock:
            try:
                decisions = replay(session.controller, req.events.splitlines())
            except ValueError as exc:
                raise HTTPException(422, detail=str(exc)) from exc
        return S.ReplayResponse(decisions=[_decision_model(d) for d in decisions],
                                csv=decisions_csv(decisions))

    @app.delete("/api/admission/sessions/{session_id}")
    def delete_session(session_id: str):
        _session(session_id)
        del sessions[session_id]
        return {"deleted": session_id}

    return app


app = create_app()
