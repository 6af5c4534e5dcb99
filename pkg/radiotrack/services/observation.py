"""Observation model: tower geometry, two-ray observable xi, receiver display
map and its inverse, linearized power measurement, receiver calibration.

Powers are normalized so the unknown tag/antenna constant never appears:
received power is xi**2 in the same units as the noise floor P0.
"""

import math
from collections.abc import Mapping, Sequence

import numpy as np
import pandas as pd
import structlog
from scipy import constants, optimize

from radiotrack.errors import (
    BelowFloorError,
    CalibrationError,
    DegenerateGeometryError,
    InputValidationError,
    PreconditionError,
    SaturationError,
)
from radiotrack.models import (
    BeamGeometry,
    CalibrationResult,
    CalibrationSample,
    ReceiverModel,
    StateVector,
    TowerSite,
    YagiPattern,
)
from radiotrack.rng import make_rng
from radiotrack.services.antenna import field_pattern, pattern_slope, wrap_angle

log = structlog.get_logger("radiotrack.observation")

P0_GRID = (1e-14, 1e-6, 200)


def _bearing(tower: TowerSite, beam_index: int) -> float:
    try:
        return tower.bearing(int(beam_index))
    except IndexError as e:
        raise InputValidationError(str(e)) from e


def _out(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


# --- geometry -----------------------------------------------------------------


def _geometry(means: np.ndarray, tower: TowerSite, bearing: float):
    means = np.asarray(means, dtype=float)
    dx = means[..., 0] - tower.x
    dy = means[..., 2] - tower.y
    r2 = dx * dx + dy * dy
    if np.any(r2 == 0.0):
        raise DegenerateGeometryError(f"position coincides with tower {tower.id} base")
    xz = means[..., 4]
    dz = xz * xz - tower.height
    slant = np.sqrt(r2 + dz * dz)
    psi = np.asarray(wrap_angle(np.arctan2(dy, dx) - bearing))
    return dx, dy, r2, dz, slant, psi


def geometry(state: StateVector, tower: TowerSite, beam_index: int) -> BeamGeometry:
    _, _, r2, _, slant, psi = _geometry(state.as_array(), tower, _bearing(tower, beam_index))
    return BeamGeometry(r=math.sqrt(float(r2)), slant_range=float(slant), psi=float(psi))


def height_gain_argument(slant_range, z, tower_height: float, wavelength: float):
    """k0 * H_T * z / R."""
    return 2.0 * math.pi / wavelength * tower_height * np.asarray(z) / np.asarray(slant_range)


def height_gain_ceiling(slant_range: float, tower_height: float, wavelength: float) -> float:
    """Altitude where the height-gain argument reaches pi/2."""
    return wavelength * slant_range / (4.0 * tower_height)


# --- xi and its gradient --------------------------------------------------------


def _signal(means, tower: TowerSite, beam_index: int, pattern: YagiPattern) -> np.ndarray:
    """Signed xi: g(psi) * sin(u) / (k0 * R)."""
    _, _, _, _, slant, psi = _geometry(means, tower, _bearing(tower, beam_index))
    xz = np.asarray(means, dtype=float)[..., 4]
    k0 = pattern.k0
    u = k0 * tower.height * xz * xz / slant
    return np.asarray(field_pattern(pattern, psi)) * np.sin(u) / (k0 * slant)


def _signal_and_gradient(means, tower: TowerSite, beam_index: int, pattern: YagiPattern):
    dx, dy, r2, dz, slant, psi = _geometry(means, tower, _bearing(tower, beam_index))
    xz = np.asarray(means, dtype=float)[..., 4]
    k0 = pattern.k0
    h_t = tower.height
    u = k0 * h_t * xz * xz / slant
    sin_u, cos_u = np.sin(u), np.cos(u)

    g = np.asarray(field_pattern(pattern, psi))
    dg = np.asarray(pattern_slope(pattern, psi))
    height = sin_u / (k0 * slant)
    dheight_dslant = -(u * cos_u + sin_u) / (k0 * slant * slant)
    dheight_dz = h_t * cos_u / (slant * slant)

    ds_dx = dg * (-dy / r2) * height + g * dheight_dslant * dx / slant
    ds_dy = dg * (dx / r2) * height + g * dheight_dslant * dy / slant
    ds_dz = g * (dheight_dslant * dz / slant + dheight_dz)

    grad = np.zeros(np.shape(xz) + (5,))
    grad[..., 0] = ds_dx
    grad[..., 2] = ds_dy
    grad[..., 4] = 2.0 * xz * ds_dz
    return g * height, grad


def xi(state: StateVector, tower: TowerSite, beam_index: int, pattern: YagiPattern) -> float:
    return abs(float(_signal(state.as_array(), tower, beam_index, pattern)))


def xi_batch(means, tower: TowerSite, beam_index: int, pattern: YagiPattern):
    """|xi| for every state row in `means` (..., 5)."""
    return _out(np.abs(_signal(means, tower, beam_index, pattern)))


def measurement_rows(means, tower: TowerSite, beam_index: int, pattern: YagiPattern, p0: float):
    """Batched linearization: H (..., 5) and h (...) at every state row."""
    s, grad = _signal_and_gradient(means, tower, beam_index, pattern)
    s = np.asarray(s)
    return 2.0 * s[..., None] * grad, s * s + p0


def measurement_row(
    state: StateVector, tower: TowerSite, beam_index: int, pattern: YagiPattern, p0: float
) -> tuple[np.ndarray, float]:
    """(H, h) with h = xi**2 + P0 and H = d h / d state; velocity slots are 0."""
    rows, h = measurement_rows(state.as_array(), tower, beam_index, pattern, p0)
    return rows, float(h)


# --- receiver display map ------------------------------------------------------------


def display_from_xi(model: ReceiverModel, xi):
    """Noise-free display value, real-valued, in [Zm, ZM)."""
    ratio = np.square(np.asarray(xi, dtype=float)) / model.p0
    return _out(model.display_min + model.span * np.tanh(model.b * np.log1p(ratio)))


def display_from_power(model: ReceiverModel, power):
    """Display value for an instantaneous normalized power (mean xi**2 + P0), clipped to range."""
    power = np.asarray(power, dtype=float)
    with np.errstate(divide="ignore"):
        level = np.tanh(model.b * np.log(np.maximum(power, 0.0) / model.p0))
    z = model.display_min + model.span * level
    return _out(np.clip(z, model.display_min, model.display_max))


def xi2_from_display(model: ReceiverModel, display):
    """Inverse display map: xi**2 for Zm <= Z < ZM."""
    z = np.asarray(display, dtype=float)
    if np.any(z < model.display_min):
        raise BelowFloorError(f"display value below floor {model.display_min}")
    if np.any(z >= model.display_max):
        raise SaturationError(f"display value at or above ceiling {model.display_max}")
    level = np.arctanh((z - model.display_min) / model.span)
    return _out(model.p0 * np.expm1(level / model.b))


# --- measurement noise --------------------------------------------------------------


def mean_power(xi, p0: float):
    return _out(np.square(np.asarray(xi, dtype=float)) + p0)


def power_variance(xi, p0: float):
    return _out(4.0 * np.square(np.asarray(xi, dtype=float)) * p0 + 2.0 * p0 * p0)


def sample_power(xi, p0: float, seed, size=None):
    """(xi + sqrt(P0) * mu)**2 with mu ~ N(0, 1)."""
    rng = make_rng(seed)
    shape = size if size is not None else np.shape(xi)
    mu = rng.standard_normal(shape)
    return _out(np.square(np.asarray(xi, dtype=float) + math.sqrt(p0) * mu))


def thermal_noise_estimate(t0: float, bandwidth: float, noise_figure: float, ka: float) -> float:
    """k * T0 * B * F / Ka."""
    if t0 <= 0 or bandwidth < 0 or noise_figure <= 0 or ka <= 0:
        raise PreconditionError("thermal noise inputs must be positive")
    return constants.k * t0 * bandwidth * noise_figure / ka


# --- calibration -------------------------------------------------------------------


def _calibration_arrays(samples: Sequence[CalibrationSample], lo: float, hi: float):
    xi = np.array([s.xi for s in samples], dtype=float)
    z = np.array([s.display for s in samples], dtype=float)
    if np.any(xi < 0) or not np.all(np.isfinite(xi)):
        raise InputValidationError("calibration xi must be finite and non-negative")
    if np.any(z < lo) or np.any(z > hi):
        raise InputValidationError(f"calibration display values must lie in [{lo}, {hi}]")
    if np.any(z >= hi):
        raise CalibrationError("display value at the ceiling: atanh diverges")
    return xi, np.arctanh((z - lo) / (hi - lo))


def _slope(xi2: np.ndarray, level: np.ndarray, p0: float) -> float:
    log_ratio = np.log1p(xi2 / p0)
    den = float(np.dot(log_ratio, log_ratio))
    if not den > 1e-300:
        raise CalibrationError("degenerate calibration set: all xi are zero")
    return float(np.dot(level, log_ratio)) / den


def fit_b_given_p0(
    samples: Sequence[CalibrationSample], model_bounds: ReceiverModel, p0: float
) -> float:
    """Least-squares slope b for a fixed noise floor."""
    if len(samples) == 0:
        raise InputValidationError("no calibration samples")
    xi, level = _calibration_arrays(samples, model_bounds.display_min, model_bounds.display_max)
    return _slope(xi * xi, level, p0)


def calibrate(
    samples: Sequence[CalibrationSample], display_min: float, display_max: float
) -> CalibrationResult:
    """Fit (b, P0): log-grid scan over P0, golden-section refinement, b in closed form."""
    if len(samples) < 3:
        raise InputValidationError("calibration needs at least 3 samples")
    span = max(s.display for s in samples) - min(s.display for s in samples)
    if span < 20:
        raise InputValidationError(f"calibration samples span {span} display units; need >= 20")

    xi, level = _calibration_arrays(samples, display_min, display_max)
    xi2 = xi * xi

    def mse(log_p0: float) -> float:
        p0 = math.exp(log_p0)
        b = _slope(xi2, level, p0)
        return float(np.mean((level - b * np.log1p(xi2 / p0)) ** 2))

    lo, hi, n = P0_GRID
    grid = np.linspace(math.log(lo), math.log(hi), n)
    values = np.array([mse(g) for g in grid])
    if not np.any(np.isfinite(values)):
        raise CalibrationError("calibration residuals are not finite")
    k = int(np.nanargmin(values))
    best = grid[k]
    if 0 < k < n - 1:
        try:
            res = optimize.minimize_scalar(
                mse, bracket=(grid[k - 1], grid[k], grid[k + 1]), method="golden"
            )
            if np.isfinite(res.fun) and res.fun <= values[k]:
                best = float(res.x)
        except ValueError:
            log.warning("calibration_refine_skipped", p0=math.exp(best))

    p0 = math.exp(best)
    b = _slope(xi2, level, p0)
    rms = math.sqrt(mse(best))
    if not (math.isfinite(rms) and math.isfinite(b) and b > 0):
        raise CalibrationError(f"calibration failed: b={b}, residual={rms}")
    model = ReceiverModel(display_min=display_min, display_max=display_max, b=b, p0=p0)
    log.info("calibration_fitted", b=b, p0=p0, residual_rms=rms, n=len(samples))
    return CalibrationResult(model=model, residual_rms=rms, n_samples=len(samples))


def calibration_samples_from_geometry(
    frame: pd.DataFrame, towers: Mapping[str, TowerSite], pattern: YagiPattern
) -> list[CalibrationSample]:
    """Rows with x, y, z, tower_id, beam_index, Z (a kite or boat survey) to (xi, Z) samples."""
    samples = []
    for row in frame.itertuples(index=False):
        tower = towers.get(str(row.tower_id))
        if tower is None:
            raise InputValidationError(f"unknown tower {row.tower_id!r} in calibration data")
        state = StateVector.at_altitude(float(row.x), 0.0, float(row.y), 0.0, float(row.z))
        samples.append(
            CalibrationSample(xi(state, tower, int(row.beam_index), pattern), float(row.Z))
        )
    return samples
