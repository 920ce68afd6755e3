"""
DICA Intersection Simulator

Coordinates autonomous vehicles through an unsignalized intersection with a
trajectory-reservation coordinator, and compares it against a fixed-cycle
traffic light on the same traffic.
"""

__version__ = "0.1.0"

from .config import ConfigError, ScenarioConfig, load_config
from .coordinator import Coordinator, Request, Response, Technique
from .database import Database, get_default_db
from .layout import build_layout, compute_conflict_zones
from .metrics import MetricsReport
from .sim_engine import World, run_scenario, run_scenarios
from .traffic_light import OversaturationError, SignalController, optimize_plan

__all__ = [
    'ConfigError',
    'ScenarioConfig',
    'load_config',
    'Coordinator',
    'Request',
    'Response',
    'Technique',
    'Database',
    'get_default_db',
    'build_layout',
    'compute_conflict_zones',
    'MetricsReport',
    'World',
    'run_scenario',
    'run_scenarios',
    'OversaturationError',
    'SignalController',
    'optimize_plan',
]
