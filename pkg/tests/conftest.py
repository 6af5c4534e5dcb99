import math

import pytest
import structlog

import radiotrack.logs
from radiotrack.models import (
    MovementParams,
    ReceiverModel,
    StateVector,
    TowerSite,
    TrackerConfig,
    YagiPattern,
)
from validation.collector import MOVEMENT


@pytest.fixture(autouse=True)
def _isolate_structlog(monkeypatch):
    # configure_logging binds sys.stderr at call time, which under pytest is a
    # per-test capture stream; don't let cached loggers outlive that stream.
    monkeypatch.setattr(radiotrack.logs, "_configured", True)
    yield
    structlog.reset_defaults()


@pytest.fixture
def movement() -> MovementParams:
    return MOVEMENT


@pytest.fixture
def pattern() -> YagiPattern:
    return YagiPattern()


@pytest.fixture
def receiver() -> ReceiverModel:
    return ReceiverModel()


@pytest.fixture
def tower() -> TowerSite:
    return TowerSite(
        id="T1",
        x=1000.0,
        y=2000.0,
        height=14.72,
        beam_bearings_deg=(0.0, 60.0, 120.0, 180.0, 240.0, 300.0),
    )


@pytest.fixture
def tracker_config(movement) -> TrackerConfig:
    return TrackerConfig(v_max=15.0, z0=14.72, movement=movement)


def polar_state(tower: TowerSite, r: float, bearing_deg: float, z: float, speed=(0.0, 0.0)):
    """State at range r along a grid bearing from the tower base."""
    a = math.radians(bearing_deg)
    return StateVector.at_altitude(
        tower.x + r * math.cos(a), speed[0], tower.y + r * math.sin(a), speed[1], z
    )
