"""
Shared fixtures for the simulator tests

Run with: python -m pytest tests/
"""
import os
import tempfile

import pytest

from dica_sim.config import ScenarioConfig
from dica_sim.database import Database
from dica_sim.layout import build_layout, compute_conflict_zones
from dica_sim.motion import VehicleSpec, generate_tss


H = 0.05


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long simulation runs (deselect with -m "not slow")')


@pytest.fixture(scope='session')
def layout():
    return build_layout(lane_width=3.5, comm_distance=50.0)


@pytest.fixture(scope='session')
def zones(layout):
    return compute_conflict_zones(layout, length=5.0, width=1.8)


@pytest.fixture
def temp_db():
    """Create a temporary results database"""
    with tempfile.TemporaryDirectory() as tmpdir:
        db = Database(os.path.join(tmpdir, 'results.db'))
        db.initialize_schema()
        yield db


@pytest.fixture
def small_config():
    """One short, light scenario"""
    return ScenarioConfig(duration=60.0, volume=100, seeds=[12]).validate()


def make_tss(layout, vin, rid, entry_time, entry_speed=10.0, speed_cap=None):
    """Fastest TSS for a vehicle entering route `rid` at `entry_time`"""
    spec = VehicleSpec(vin)
    route = layout.route(rid)
    cap = min(route.turn_speed(layout.lateral_accel), spec.v_max)
    tss = generate_tss(spec, route, entry_time, min(entry_speed, cap),
                       spec.v_max if speed_cap is None else speed_cap, H, layout.lateral_accel)
    return spec, tss
