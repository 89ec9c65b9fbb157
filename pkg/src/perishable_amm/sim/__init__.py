"""Deterministic discrete-event simulator and its tooling."""

from .engine import FinalState, RunResult, SimulationError, run
from .report import report
from .scenario import Scenario, generate_scenario, load_scenario
from .trace import Trace, TraceEvent, read_csv, replay
from .verify import InvariantReport, verify, verify_run

__all__ = [
    "FinalState", "InvariantReport", "RunResult", "Scenario", "SimulationError", "Trace", "TraceEvent",
    "generate_scenario", "load_scenario", "read_csv", "replay", "report", "run", "verify", "verify_run",
]
