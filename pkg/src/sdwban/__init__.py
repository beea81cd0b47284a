"""Deterministic discrete-event simulator for SDN-managed wireless body-area networks."""

from .engine import Simulation, run
from .metrics import MetricsReport, summarize
from .model import ConfigError, SdwbanError
from .scenario import Scenario, load_scenario, parse_scenario

__all__ = [
    "ConfigError",
    "MetricsReport",
    "Scenario",
    "SdwbanError",
    "Simulation",
    "load_scenario",
    "parse_scenario",
    "run",
    "summarize",
]

__version__ = "0.1.0"
