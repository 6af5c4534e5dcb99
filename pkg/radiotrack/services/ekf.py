"""Extended Kalman filter over the 5-state movement model with scalar power
measurements at irregular times, plus observability diagnostics.

All step functions broadcast over leading batch axes of FilterState, so a
set of candidate filters advances as one array computation.
"""

from collections.abc import Callable

import numpy as np

from radiotrack.config import config
from radiotrack.errors import NumericalError, PreconditionError
from radiotrack.models import (
    FilterState,
    Measurement,
    MovementParams,
    StateVector,
    TowerSite,
    YagiPattern,
)
from radiotrack.services import movement, observation
from radiotrack.services.antenna import boresight_gain, field_pattern

# mean (..., 5) -> (H (..., 5), h (...))
RowProvider = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def check_covariance(cov: np.ndarray, rel_tol: float | None = None) -> None:
    """Raise NumericalError unless every covariance in the batch is symmetric PSD."""
    rel_tol = config.numerics.psd_rel_tol if rel_tol is None else rel_tol
    scale = np.max(np.abs(cov), axis=(-1, -2))
    asym = np.max(np.abs(cov - np.swapaxes(cov, -1, -2)), axis=(-1, -2))
    if np.any(asym > 1e-12 * np.maximum(scale, 1e-300)):
        raise NumericalError("covariance lost symmetry")
    w = np.linalg.eigvalsh(cov)
    if np.any(w[..., 0] < -rel_tol * np.maximum(w[..., -1], 0.0)):
        raise NumericalError(f"covariance not PSD: min eigenvalue {np.min(w[..., 0]):.3e}")


def initial_state(mean, cov_diag, t: float) -> FilterState:
    mean = np.asarray(mean, dtype=float)
    cov = np.broadcast_to(np.diag(np.asarray(cov_diag, dtype=float)), mean.shape + (5,)).copy()
    return FilterState(mean=mean.copy(), cov=cov, t=float(t))


def predict(fs: FilterState, params: MovementParams, t_next: float) -> FilterState:
    """Exact-discretization prediction to t_next."""
    dt = float(t_next) - fs.t
    if dt < 0:
        raise PreconditionError(f"prediction goes back in time by {-dt:.3f} s")
    phi = movement.transition_matrix(params, dt)
    q = movement.process_noise_cov(params, dt)
    mean = fs.mean @ phi.T
    cov = symmetrize(phi @ fs.cov @ phi.T + q)
    if config.numerics.debug_checks:
        check_covariance(cov)
    return FilterState(mean=mean, cov=cov, t=float(t_next))


def update(
    fs: FilterState,
    m: Measurement,
    obs: RowProvider,
    *,
    joseph: bool = True,
    strict: bool = True,
) -> tuple[FilterState, np.ndarray | float, np.ndarray | float]:
    """Scalar-measurement update linearized at the a-priori mean.

    Returns (posterior, innovation, innovation variance). With strict=False a
    batch member whose innovation variance is not a positive finite number
    keeps its prior and reports NaN innovation variance instead of raising.
    """
    h_row, h = obs(fs.mean)
    h_row = np.asarray(h_row, dtype=float)
    r_var = np.asarray(m.r_var, dtype=float)
    p = fs.cov

    ph = np.einsum("...ij,...j->...i", p, h_row)
    f = np.asarray(np.einsum("...i,...i->...", h_row, ph) + r_var)
    innovation = np.asarray(m.y, dtype=float) - np.asarray(h, dtype=float)

    bad = np.asarray(~(np.isfinite(f) & (f > 0)) | ~np.all(np.isfinite(h_row), axis=-1))
    if np.any(bad):
        if strict:
            raise NumericalError(f"innovation variance not positive: {np.min(f):.3e}")
        f = np.where(bad, 1.0, f)
        innovation = np.where(bad, 0.0, innovation)
        h_row = np.where(bad[..., None], 0.0, h_row)
        ph = np.where(bad[..., None], 0.0, ph)

    gain = ph / f[..., None]
    mean = fs.mean + gain * innovation[..., None]
    a = np.eye(5) - gain[..., :, None] * h_row[..., None, :]
    if joseph:
        cov = a @ p @ np.swapaxes(a, -1, -2)
        cov = cov + (r_var[..., None, None] * gain[..., :, None] * gain[..., None, :])
    else:
        cov = a @ p
    cov = symmetrize(cov)
    if config.numerics.debug_checks:
        check_covariance(cov)

    f_out = np.where(bad, np.nan, f)
    post = FilterState(mean=mean, cov=cov, t=fs.t)
    if np.ndim(f_out) == 0:
        return post, float(innovation), float(f_out)
    return post, innovation, f_out


def observability_matrix(tm: np.ndarray, h_row: np.ndarray) -> np.ndarray:
    """Rows H, H T, H T^2, H T^3, H T^4."""
    rows = [np.asarray(h_row, dtype=float).reshape(5)]
    for _ in range(4):
        rows.append(rows[-1] @ tm)
    return np.vstack(rows)


def numerical_rank(s: np.ndarray, rel_tol: float | None = None) -> int:
    rel_tol = config.numerics.rank_rel_tol if rel_tol is None else rel_tol
    sv = np.linalg.svd(s, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rel_tol * sv[0]))


def degree_of_observability(
    params: MovementParams,
    state: StateVector,
    tower: TowerSite,
    beam_index: int,
    pattern: YagiPattern,
    dt: float,
) -> int:
    """Rank of the observability matrix for one beam linearized at `state`."""
    tm = movement.transition_matrix(params, dt)
    # P0 only shifts h, not H
    h_row, _ = observation.measurement_row(state, tower, beam_index, pattern, 0.0)
    psi = observation.geometry(state, tower, beam_index).psi
    if abs(field_pattern(pattern, psi)) <= config.numerics.rank_rel_tol * boresight_gain(pattern):
        # H = 2 xi grad(xi) vanishes on a pattern null
        h_row = np.zeros(5)
    return numerical_rank(observability_matrix(tm, h_row))
