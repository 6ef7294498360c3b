"""Scenario loading, execution and metrics."""

from .metrics import ClassMetrics, MetricsReport, PartialLogError, compute_metrics
from .runner import RunAborted, RunResult, Simulation, run
from .schema import Issue, ScenarioError, ScenarioSpec, load, loads, validate

__all__ = [
    "ClassMetrics",
    "Issue",
    "MetricsReport",
    "PartialLogError",
    "RunAborted",
    "RunResult",
    "ScenarioError",
    "ScenarioSpec",
    "Simulation",
    "compute_metrics",
    "load",
    "loads",
    "run",
    "validate",
]
