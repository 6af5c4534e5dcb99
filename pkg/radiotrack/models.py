"""Domain types shared by the services, the tracker and the file layer.

Config-like values are frozen pydantic models: validated once, hashable, safe
to use as cache keys. Numeric state values are frozen dataclasses around numpy
arrays.
"""

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import constants

UTC = timezone.utc

CARRIER_HZ = 166.38e6
DEFAULT_WAVELENGTH = constants.c / CARRIER_HZ
# Hansen-Woodyard end-fire phasing constant
HANSEN_WOODYARD = 2.94

_REL_TOL = 1e-12


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class MovementParams(_Frozen):
    beta_x: float = Field(gt=0)
    beta_y: float = Field(gt=0)
    beta_z: float = Field(gt=0)
    sigma_xx: float = Field(ge=0)
    sigma_yy: float = Field(ge=0)
    sigma_zz: float = Field(ge=0)
    sigma_xy: float = 0.0
    sigma_yx: float = 0.0
    sigma_zx: float = 0.0
    sigma_zy: float = 0.0

    @property
    def is_isotropic(self) -> bool:
        return math.isclose(self.sigma_xx, self.sigma_yy, rel_tol=_REL_TOL) and math.isclose(
            self.sigma_yx, -self.sigma_xy, rel_tol=_REL_TOL, abs_tol=1e-300
        )

    @property
    def is_almost_observable_compatible(self) -> bool:
        """True when the three decay rates are pairwise distinct."""
        betas = (self.beta_x, self.beta_y, self.beta_z)
        for i in range(3):
            for j in range(i + 1, 3):
                a, b = betas[i], betas[j]
                if abs(a - b) <= 1e-9 * max(a, b):
                    return False
        return True

    def scaled_noise(self, factor: float) -> "MovementParams":
        """Copy with every sigma multiplied by `factor` (Q scales by factor**2)."""
        update = {
            name: getattr(self, name) * factor
            for name in type(self).model_fields
            if name.startswith("sigma_")
        }
        return self.model_copy(update=update)


class YagiPattern(_Frozen):
    effective_length: float = Field(default=4.6, gt=0)
    wavelength: float = Field(default=DEFAULT_WAVELENGTH, gt=0)

    @property
    def k0(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def beta0(self) -> float:
        return -(self.k0 + HANSEN_WOODYARD / self.effective_length)

    @property
    def p(self) -> float:
        return self.beta0 * self.effective_length / 2.0

    @property
    def q(self) -> float:
        return self.k0 * self.effective_length / 2.0

    @model_validator(mode="after")
    def _phasing(self):
        if not (self.p < 0 < self.q and abs(self.p) > self.q):
            raise ValueError("pattern phasing must keep p + q*cos(psi) strictly negative")
        return self


class ReceiverModel(_Frozen):
    display_min: float = Field(default=0.0, ge=0)
    display_max: float = Field(default=255.0, le=255)
    b: float = Field(default=0.3013, gt=0)
    p0: float = Field(default=4.8916e-11, gt=0)

    @property
    def span(self) -> float:
        return self.display_max - self.display_min

    @model_validator(mode="after")
    def _ordered(self):
        if not self.display_min < self.display_max:
            raise ValueError("display_min must be below display_max")
        return self


class TowerSite(_Frozen):
    id: str = Field(min_length=1)
    x: float
    y: float
    height: float = Field(gt=0)
    # Counterclockwise from grid east, degrees
    beam_bearings_deg: tuple[float, ...] = Field(min_length=1)

    @property
    def beam_bearings(self) -> np.ndarray:
        return np.radians(np.asarray(self.beam_bearings_deg, dtype=float))

    @property
    def n_beams(self) -> int:
        return len(self.beam_bearings_deg)

    def bearing(self, beam_index: int) -> float:
        if not 0 <= beam_index < self.n_beams:
            raise IndexError(f"tower {self.id} has no beam {beam_index}")
        return math.radians(self.beam_bearings_deg[beam_index])

    @model_validator(mode="after")
    def _distinct_beams(self):
        wrapped = [b % 360.0 for b in self.beam_bearings_deg]
        if len(set(wrapped)) != len(wrapped):
            raise ValueError(f"tower {self.id}: beam bearings must be distinct")
        return self


class TrackerConfig(_Frozen):
    format_version: Literal[1] = 1
    v_max: float = Field(ge=0)
    z0: float = Field(gt=0)
    z_threshold: float = 22.0
    t_gap_max: float = Field(default=300.0, gt=0)
    initial_cov_diag: tuple[float, float, float, float, float] = (10.0, 10.0, 10.0, 10.0, 100.0)
    movement: MovementParams
    receiver: ReceiverModel = ReceiverModel()
    pattern: YagiPattern = YagiPattern()
    psi_step_deg: float = Field(default=1.0, gt=0, le=30)
    r_min: float = Field(default=10.0, gt=0)
    r_max: float = Field(default=1e5, gt=0)
    r_tol: float = Field(default=0.1, gt=0)
    r_grid_points: int = Field(default=400, ge=16)
    # farthest static roots kept per psi when enumerating start states; None keeps all
    roots_per_psi: int | None = Field(default=2, ge=1)
    candidate_cap: int = Field(default=64, ge=1)
    prescreen_epochs: int = Field(default=10, ge=2)
    prescreen_batch: int = Field(default=4096, ge=1)
    r_var_multiplier: float = Field(default=1.0, gt=0)
    saturation_var_factor: float = Field(default=10.0, ge=1)
    joseph: bool = True

    @model_validator(mode="after")
    def _consistent(self):
        if any(v <= 0 for v in self.initial_cov_diag):
            raise ValueError("initial_cov_diag entries must be positive")
        if self.z_threshold < self.receiver.display_min:
            raise ValueError("z_threshold must not be below the display floor")
        if self.r_min >= self.r_max:
            raise ValueError("r_min must be below r_max")
        return self


class Schedule(_Frozen):
    mode: Literal["dwell", "cadence"] = "dwell"
    dwell_s: float = Field(default=6.5, gt=0)
    pulse_period_s: float = Field(default=5.3, gt=0)
    pulse_offset_s: float = Field(default=0.0, ge=0)
    cadence_s: float = Field(default=6.0, gt=0)


class InitialState(_Frozen):
    x: float
    vx: float = 0.0
    y: float
    vy: float = 0.0
    z: float = Field(ge=0)


class ScenarioConfig(_Frozen):
    format_version: Literal[1] = 1
    tag_id: str = "tag-1"
    towers: tuple[TowerSite, ...] = Field(min_length=1)
    movement: MovementParams
    receiver: ReceiverModel = ReceiverModel()
    pattern: YagiPattern = YagiPattern()
    tracker: TrackerConfig | None = None
    schedule: Schedule = Schedule()
    initial: InitialState
    start_time: datetime = datetime(2024, 6, 1, tzinfo=UTC)
    duration_s: float = Field(gt=0)
    measurement_noise: bool = True
    seed: int = Field(default=0, ge=0)

    @property
    def t0(self) -> float:
        start = self.start_time
        if start.tzinfo is None:
            start = start.replace(tzinfo=UTC)
        return start.timestamp()

    @model_validator(mode="after")
    def _unique_towers(self):
        ids = [t.id for t in self.towers]
        if len(set(ids)) != len(ids):
            raise ValueError("tower ids must be unique")
        if self.schedule.mode == "dwell" and self.schedule.dwell_s < self.schedule.pulse_period_s:
            raise ValueError("dwell window shorter than the pulse period can miss pulses")
        return self


@dataclass(frozen=True)
class StateVector:
    x: float
    vx: float
    y: float
    vy: float
    xz: float

    @property
    def z(self) -> float:
        return self.xz * self.xz

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.vx, self.y, self.vy, self.xz], dtype=float)

    @classmethod
    def from_array(cls, a) -> "StateVector":
        a = np.asarray(a, dtype=float).reshape(5)
        return cls(*(float(v) for v in a))

    @classmethod
    def at_altitude(cls, x: float, vx: float, y: float, vy: float, z: float) -> "StateVector":
        return cls(x, vx, y, vy, math.sqrt(z))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n, 5)

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> StateVector:
        return StateVector.from_array(self.states[i])


@dataclass(frozen=True)
class FilterState:
    """Mean and covariance at time t. Leading axes of mean/cov are a batch of filters."""

    mean: np.ndarray  # (..., 5)
    cov: np.ndarray  # (..., 5, 5)
    t: float

    @property
    def state(self) -> StateVector:
        return StateVector.from_array(self.mean)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.mean.shape[:-1]

    def select(self, index) -> "FilterState":
        return FilterState(self.mean[index], self.cov[index], self.t)


@dataclass(frozen=True)
class Measurement:
    y: float | np.ndarray
    r_var: float | np.ndarray
    t: float
    tower_id: str = ""
    beam_index: int = 0


@dataclass(frozen=True)
class BeamGeometry:
    r: float
    slant_range: float
    psi: float


@dataclass(frozen=True)
class CalibrationSample:
    xi: float
    display: float


@dataclass(frozen=True)
class CalibrationResult:
    model: ReceiverModel
    residual_rms: float
    n_samples: int


@dataclass(frozen=True, order=True)
class Detection:
    t: float
    tower_id: str
    beam_index: int
    display: int
    tag_id: str = field(default="tag-1", compare=False)


@dataclass(frozen=True)
class TrackPoint:
    t: float
    state: StateVector
    cov: np.ndarray
    tower_id: str
    beam_index: int
    display: int
    predicted_display: float
    segment: int


@dataclass
class Track:
    tag_id: str = "tag-1"
    points: list[TrackPoint] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def times(self) -> np.ndarray:
        return np.array([p.t for p in self.points], dtype=float)

    @property
    def means(self) -> np.ndarray:
        return np.array([p.state.as_array() for p in self.points]).reshape(-1, 5)

    @property
    def displays(self) -> np.ndarray:
        return np.array([p.display for p in self.points], dtype=float)

    @property
    def predicted_displays(self) -> np.ndarray:
        return np.array([p.predicted_display for p in self.points], dtype=float)
