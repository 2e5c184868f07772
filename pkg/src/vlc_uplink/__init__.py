"""Infrared uplink simulator for a VLC room with angle-diversity receivers and beam steering."""

from .errors import AcquisitionError, DomainError, ScenarioError, UndefinedMetricError
from .metrics import LinkMetrics, link_metrics
from .raytrace import ImpulseResponse, PathContribution, trace_unsteered
from .scene import Scenario, Vec3, default_paper_scenario, load_scenario
from .steering import SteeringResult, run_acquisition, steered_trace

__all__ = [
    "AcquisitionError",
    "DomainError",
    "ImpulseResponse",
    "LinkMetrics",
    "PathContribution",
    "Scenario",
    "ScenarioError",
    "SteeringResult",
    "UndefinedMetricError",
    "Vec3",
    "default_paper_scenario",
    "link_metrics",
    "load_scenario",
    "run_acquisition",
    "steered_trace",
    "trace_unsteered",
]
