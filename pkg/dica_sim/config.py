"""
Scenario configuration

A scenario is described by a YAML file whose keys mirror the ScenarioConfig
dataclasses below. Every key is optional; the defaults describe 70 km/h roads, a 50 m
communication region, 0.05 s steps and 10 minute runs.
"""
import copy
import logging
import os
from dataclasses import dataclass, field, fields, asdict, is_dataclass
from typing import Any, Dict, List, Optional, Tuple

import yaml


logger = logging.getLogger(__name__)

# Maximum allowed speed, 70 km/h
V_MAX = 70.0 / 3.6

# Traffic volume (vehicles per 10 minutes) -> per-trial spawn probability per road
VOLUME_TABLE = {100: 0.03, 200: 0.06, 300: 0.08, 400: 0.11, 500: 0.14}

DEFAULT_SEEDS = [12, 21, 66]

MODES = ['baseline', 'enhanced', 'tlight']
TECHNIQUES = ['A', 'B', 'C', 'D']
PHASE_SCHEMES = ['split', 'protected_left']


class ConfigError(ValueError):
    """Raised for invalid or unreadable scenario configuration"""
    pass


@dataclass
class LayoutConfig:
    lane_width: float = 3.5
    comm_distance: float = 50.0
    left_turn_radius: Optional[float] = None
    right_turn_radius: Optional[float] = None
    lateral_accel: float = 2.5
    zone_step: float = 0.1


@dataclass
class VehicleConfig:
    length: float = 5.0
    width: float = 1.8
    a_max: float = 2.0
    a_min: float = 4.5
    v_max: float = V_MAX


@dataclass
class SpawnConfig:
    p_left: float = 0.2
    p_straight: float = 0.6
    p_right: float = 0.2
    initial_speed_range: Tuple[float, float] = (0.4, 1.0)
    # Seconds between Bernoulli spawn trials on each road
    spawn_period: float = 0.7
    minor_factor: float = 0.3


@dataclass
class SignalConfig:
    saturation_flow: float = 1800.0  # veh/h/lane
    lost_time_per_phase: float = 4.0
    yellow: float = 3.0
    phase_scheme: str = 'protected_left'


@dataclass
class CoordinatorConfig:
    techniques: List[str] = field(default_factory=lambda: list(TECHNIQUES))
    follow_margin: float = 2.0
    zone_buffer: Optional[float] = None  # defaults to one vehicle length


@dataclass
class ScenarioConfig:
    """Complete description of one simulation experiment"""
    mode: str = 'enhanced'
    duration: Optional[float] = 600.0
    vehicle_target: Optional[int] = None
    h: float = 0.05
    volume: int = 100
    seeds: List[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    unbalanced: bool = False
    volume_schedule: Optional[List[Tuple[float, int]]] = None
    max_sim_time: float = 7200.0
    trace: bool = False
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    vehicle: VehicleConfig = field(default_factory=VehicleConfig)
    spawn: SpawnConfig = field(default_factory=SpawnConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    coordinator: CoordinatorConfig = field(default_factory=CoordinatorConfig)

    @property
    def techniques(self) -> frozenset:
        """Coordinator improvement techniques in effect for this mode"""
        if self.mode == 'baseline':
            return frozenset()
        return frozenset(self.coordinator.techniques)

    @property
    def zone_buffer(self) -> float:
        if self.coordinator.zone_buffer is None:
            return self.vehicle.length
        return self.coordinator.zone_buffer

    def spawn_probability(self, t: float = 0.0) -> float:
        """Per-trial spawn probability of a major road at time t"""
        volume = self.volume
        if self.volume_schedule:
            for start, scheduled in sorted(self.volume_schedule):
                if t >= start:
                    volume = scheduled
        return VOLUME_TABLE[volume]

    def validate(self):
        """
        Check the configuration for consistency

        Raises:
            ConfigError: If any field is out of range
        """
        if self.mode not in MODES:
            raise ConfigError(f"Invalid mode: {self.mode}. Must be one of {MODES}")
        if self.h <= 0:
            raise ConfigError(f"Invalid step h: {self.h}. Must be positive")
        if self.volume not in VOLUME_TABLE:
            raise ConfigError(f"Invalid volume: {self.volume}. Must be one of {sorted(VOLUME_TABLE)}")
        for start, volume in self.volume_schedule or []:
            if volume not in VOLUME_TABLE:
                raise ConfigError(f"Invalid scheduled volume: {volume} at t={start}")
        if self.duration is None and self.vehicle_target is None:
            raise ConfigError("Either duration or vehicle_target must be set")
        if self.duration is not None and self.duration <= 0:
            raise ConfigError(f"Invalid duration: {self.duration}")
        if self.vehicle_target is not None and self.vehicle_target <= 0:
            raise ConfigError(f"Invalid vehicle_target: {self.vehicle_target}")
        if not self.seeds:
            raise ConfigError("At least one seed is required")

        sp = self.spawn
        total = sp.p_left + sp.p_straight + sp.p_right
        if abs(total - 1.0) > 1e-9 or min(sp.p_left, sp.p_straight, sp.p_right) < 0:
            raise ConfigError(f"Route probabilities must be non-negative and sum to 1, got {total}")
        lo, hi = sp.initial_speed_range
        if not 0 < lo <= hi <= 1:
            raise ConfigError(f"Invalid initial_speed_range: {sp.initial_speed_range}")
        if sp.spawn_period < self.h:
            raise ConfigError(f"spawn_period {sp.spawn_period} is shorter than the step {self.h}")
        if not 0 <= sp.minor_factor <= 1:
            raise ConfigError(f"Invalid minor_factor: {sp.minor_factor}")

        v = self.vehicle
        if min(v.length, v.width, v.a_max, v.a_min, v.v_max) <= 0:
            raise ConfigError("Vehicle dimensions and kinematic limits must be positive")

        unknown = set(self.coordinator.techniques) - set(TECHNIQUES)
        if unknown:
            raise ConfigError(f"Invalid techniques: {sorted(unknown)}. Must be among {TECHNIQUES}")
        if 'D' in self.coordinator.techniques and 'B' not in self.coordinator.techniques:
            raise ConfigError("Technique D (bisection) requires technique B (conflict zones)")
        if self.signal.phase_scheme not in PHASE_SCHEMES:
            raise ConfigError(f"Invalid phase_scheme: {self.signal.phase_scheme}. "
                              f"Must be one of {PHASE_SCHEMES}")
        return self

    def replace(self, **overrides) -> 'ScenarioConfig':
        """Copy with top-level fields overridden (None values are ignored)"""
        new = copy.deepcopy(self)
        for key, value in overrides.items():
            if value is None:
                continue
            if not hasattr(new, key):
                raise ConfigError(f"Unknown config key: {key}")
            setattr(new, key, value)
        return new

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> 'ScenarioConfig':
        """Build a config from nested dicts, rejecting unknown keys"""
        return _build(cls, data or {}, path='')


def _build(kind, data: Dict[str, Any], path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"Expected a mapping at '{path or 'root'}', got {type(data).__name__}")
    known = {f.name: f for f in fields(kind)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"Unknown config keys at '{path or 'root'}': {sorted(unknown)}")
    kwargs = {}
    defaults = kind()
    for name, value in data.items():
        default = getattr(defaults, name)
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}{name}.")
        elif name in ('initial_speed_range',):
            kwargs[name] = tuple(value)
        elif name == 'volume_schedule' and value is not None:
            kwargs[name] = [(float(t), int(v)) for t, v in value]
        else:
            kwargs[name] = value
    return kind(**kwargs)


def load_config(path: Optional[str] = None) -> ScenarioConfig:
    """
    Load and validate a scenario file

    Args:
        path: YAML file path; None gives the default scenario

    Returns:
        Validated ScenarioConfig

    Raises:
        ConfigError: If the file cannot be read or holds invalid values
    """
    if path is None:
        return ScenarioConfig().validate()
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    logger.info("Loaded scenario config from %s", path)
    return ScenarioConfig.from_dict(data).validate()


def default_log_level() -> str:
    return os.environ.get('DICA_LOG_LEVEL', 'WARNING').upper()
