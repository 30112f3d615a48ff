"""EDCA saturation analysis, multimedia capacity estimation, and admission
control for 802.11e infrastructure BSSs, with a discrete-event MAC simulator
for cross-validation."""

__version__ = "0.1.0"

from .admission import AdmissionController, Decision, Tspec, replay
from .capacity import (CapacitySolution, ServiceTimeCache, max_admitted_flows,
                       solve_scenario_utilization, solve_utilization)
from .errors import ConvergenceError, ScenarioError, ZoneError
from .saturation import SaturationSolution, service_time, solve_fixed_point
from .scenario import (Scenario, load_scenario, load_scenario_file,
                       derive_traffic_classes)
from .simulator import SimMetrics, activity_histogram, capacity_search, run
from .timing import ExchangeTimes, exchange_times, frame_duration

__all__ = [
    "AdmissionController", "CapacitySolution", "ConvergenceError", "Decision",
    "ExchangeTimes", "SaturationSolution", "Scenario", "ScenarioError",
    "ServiceTimeCache", "SimMetrics", "Tspec", "ZoneError",
    "activity_histogram", "capacity_search", "derive_traffic_classes",
    "exchange_times", "frame_duration", "load_scenario", "load_scenario_file",
    "max_admitted_flows", "replay", "run", "service_time",
    "solve_fixed_point", "solve_scenario_utilization", "solve_utilization",
]
