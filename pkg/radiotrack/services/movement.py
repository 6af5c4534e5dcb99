"""Correlated OU/CIR movement model with exact discretization over irregular steps.

State layout is [x, vx, y, vy, xz] with altitude z = xz**2. Velocities are
Ornstein-Uhlenbeck processes, positions integrate them, and xz is a zero-mean
OU process, which makes z a square-root (CIR) diffusion.
"""

import math
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np
import structlog
from numpy.polynomial import polynomial as npoly
from scipy import integrate, linalg, special

from radiotrack.config import config
from radiotrack.errors import NumericalError, PreconditionError, QuadratureError
from radiotrack.models import MovementParams, StateVector, Trajectory
from radiotrack.rng import make_rng

log = structlog.get_logger("radiotrack.movement")

STATE_DIM = 5
# beta*dt below this uses the series for mu
_SMALL_RATE = 1e-8
# beta*dt at or below this integrates Q factors as power series in s/dt
_SERIES_RATE = 1.0
_SERIES_TERMS = 24
_CLAMP_REL = 1e-10

# Per state row: decay factor kind, rate axis, driving row of B
_NOISE_ROWS = (
    ("mu", "x", 1),
    ("lam", "x", 1),
    ("mu", "y", 3),
    ("lam", "y", 3),
    ("lam", "z", 4),
)


def _check_dt(dt: float) -> float:
    dt = float(dt)
    if not math.isfinite(dt) or dt < 0:
        raise PreconditionError(f"time step must be finite and >= 0, got {dt}")
    return dt


def decay_factors(beta: float, dt: float) -> tuple[float, float]:
    """(lambda, mu) = (exp(-beta*dt), (1 - exp(-beta*dt))/beta)."""
    x = beta * dt
    lam = math.exp(-x)
    if x < _SMALL_RATE:
        mu = dt * (1.0 - x / 2.0 + x * x / 6.0)
    else:
        mu = -math.expm1(-x) / beta
    return lam, mu


def system_matrices(params: MovementParams) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time system matrix T (5x5) and noise-coefficient matrix B (5x3)."""
    t = np.zeros((5, 5))
    t[0, 1] = 1.0
    t[1, 1] = -params.beta_x
    t[2, 3] = 1.0
    t[3, 3] = -params.beta_y
    t[4, 4] = -params.beta_z

    b = np.zeros((5, 3))
    b[1] = (params.sigma_xx, params.sigma_xy, 0.0)
    b[3] = (params.sigma_yx, params.sigma_yy, 0.0)
    b[4] = (params.sigma_zx, params.sigma_zy, params.sigma_zz)
    return t, b


def transition_matrix(params: MovementParams, dt: float) -> np.ndarray:
    """exp(T*dt). Read-only; copy before mutating."""
    return _transition(params, _check_dt(dt))


@lru_cache(maxsize=4096)
def _transition(params: MovementParams, dt: float) -> np.ndarray:
    lam_x, mu_x = decay_factors(params.beta_x, dt)
    lam_y, mu_y = decay_factors(params.beta_y, dt)
    lam_z, _ = decay_factors(params.beta_z, dt)
    m = np.zeros((5, 5))
    m[0, 0] = 1.0
    m[0, 1] = mu_x
    m[1, 1] = lam_x
    m[2, 2] = 1.0
    m[2, 3] = mu_y
    m[3, 3] = lam_y
    m[4, 4] = lam_z
    m.setflags(write=False)
    return m


def _factor_terms(kind: str, beta: float, dt: float) -> list[tuple[np.ndarray, float]]:
    """Decay factor on u = s/dt in [0, 1] as a sum of poly(u) * exp(-x*u) terms."""
    x = beta * dt
    if x <= _SERIES_RATE:
        n = np.arange(_SERIES_TERMS)
        if kind == "lam":
            coef = (-x) ** n / special.factorial(n)
        else:
            coef = np.zeros(_SERIES_TERMS)
            coef[1:] = dt * (-x) ** (n[1:] - 1) / special.factorial(n[1:])
        return [(coef, 0.0)]
    if kind == "lam":
        return [(np.array([1.0]), x)]
    return [(np.array([1.0 / beta]), 0.0), (np.array([-1.0 / beta]), x)]


def _scaled_moments(n_max: int, x: float) -> np.ndarray:
    """Integral of u**n * exp(-x*u) over [0, 1] for n = 0..n_max."""
    n = np.arange(n_max + 1, dtype=float)
    if x == 0.0:
        return 1.0 / (n + 1.0)
    return np.exp(special.gammaln(n + 1.0) - (n + 1.0) * math.log(x)) * special.gammainc(
        n + 1.0, x
    )


def _product_integral(fi, fj, dt: float) -> float:
    total = 0.0
    for ci, xi in fi:
        for cj, xj in fj:
            c = npoly.polymul(ci, cj)
            total += float(np.dot(c, _scaled_moments(len(c) - 1, xi + xj)))
    return dt * total


def process_noise_cov(params: MovementParams, dt: float) -> np.ndarray:
    """Closed-form Q(dt) = integral over [0, dt] of M(s) B B' M(s)', M(s) = exp(T*s).

    Every entry is a channel covariance (B B')[i, j] times the integral of a
    product of two decay factors. Factors are expanded in s/dt so the integrals
    stay accurate when beta*dt is tiny. Read-only; copy before mutating.
    """
    return _process_noise(params, _check_dt(dt))


@lru_cache(maxsize=4096)
def _process_noise(params: MovementParams, dt: float) -> np.ndarray:
    _, b = system_matrices(params)
    channels = b @ b.T
    rates = {"x": params.beta_x, "y": params.beta_y, "z": params.beta_z}
    factors = [_factor_terms(kind, rates[axis], dt) for kind, axis, _ in _NOISE_ROWS]

    q = np.zeros((5, 5))
    if dt > 0.0:
        for i, (_, _, ci) in enumerate(_NOISE_ROWS):
            for j in range(i, STATE_DIM):
                c = channels[ci, _NOISE_ROWS[j][2]]
                if c == 0.0:
                    continue
                q[i, j] = q[j, i] = c * _product_integral(factors[i], factors[j], dt)
    q.setflags(write=False)
    return q


def process_noise_cov_oracle(params: MovementParams, dt: float) -> np.ndarray:
    """Q(dt) by adaptive quadrature of each upper-triangular entry. Slow; for verification."""
    dt = _check_dt(dt)
    t, b = system_matrices(params)
    channels = b @ b.T
    q = np.zeros((5, 5))
    if dt == 0.0:
        return q

    def integrand(s: float, i: int, j: int) -> float:
        m = linalg.expm(t * s)
        return float(m[i] @ channels @ m[j])

    for i in range(STATE_DIM):
        for j in range(i, STATE_DIM):
            val, _, _, *warning = integrate.quad(
                integrand,
                0.0,
                dt,
                args=(i, j),
                epsabs=0.0,
                epsrel=config.numerics.quad_epsrel,
                limit=config.numerics.quad_limit,
                full_output=1,
            )
            if warning:
                raise QuadratureError(f"Q[{i},{j}] did not converge at dt={dt}: {warning[0]}")
            q[i, j] = q[j, i] = val
    return q


def noise_factor(q: np.ndarray) -> np.ndarray:
    """L with L @ L.T == q, from a symmetric eigendecomposition with eigenvalue clamping."""
    w, v = np.linalg.eigh(q)
    w_max = max(float(w.max()), 0.0)
    if float(w.min()) < -_CLAMP_REL * w_max:
        raise NumericalError(f"covariance not PSD: min eigenvalue {w.min():.3e}, max {w_max:.3e}")
    return v * np.sqrt(np.clip(w, 0.0, None))


@lru_cache(maxsize=4096)
def _noise_factor(params: MovementParams, dt: float) -> np.ndarray:
    f = noise_factor(_process_noise(params, dt))
    f.setflags(write=False)
    return f


def sample_process_noise(
    params: MovementParams,
    dt: float,
    rng: np.random.Generator,
    size: int | tuple[int, ...] | None = None,
) -> np.ndarray:
    """Draws from N(0, Q(dt)); shape `size + (5,)`."""
    factor = _noise_factor(params, _check_dt(dt))
    shape = (STATE_DIM,) if size is None else tuple(np.atleast_1d(size)) + (STATE_DIM,)
    return rng.standard_normal(shape) @ factor.T


def propagate(
    state: StateVector,
    params: MovementParams,
    dt: float,
    noise: np.ndarray | None = None,
) -> StateVector:
    vec = transition_matrix(params, dt) @ state.as_array()
    if noise is not None:
        vec = vec + np.asarray(noise, dtype=float).reshape(STATE_DIM)
    return StateVector.from_array(vec)


def simulate(
    params: MovementParams,
    init: StateVector,
    times: Sequence[float],
    seed: int | np.random.Generator,
) -> list[StateVector]:
    """One state per timestamp, starting from `init` at times[0]."""
    trajectory = simulate_trajectory(params, init, times, seed)
    return [StateVector.from_array(row) for row in trajectory.states]


def simulate_trajectory(
    params: MovementParams,
    init: StateVector,
    times: Sequence[float],
    seed: int | np.random.Generator,
) -> Trajectory:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise PreconditionError("times must be a non-empty 1-D sequence")
    steps = np.diff(times)
    if np.any(steps <= 0) or not np.all(np.isfinite(times)):
        raise PreconditionError("times must be finite and strictly increasing")

    rng = make_rng(seed)
    states = np.empty((len(times), STATE_DIM))
    states[0] = init.as_array()
    for i, dt in enumerate(steps, start=1):
        dt = float(dt)
        states[i] = _transition(params, dt) @ states[i - 1] + sample_process_noise(params, dt, rng)
    log.debug("trajectory_simulated", steps=len(steps), duration_s=float(times[-1] - times[0]))
    return Trajectory(times=times, states=states)


def stationary_altitude(params: MovementParams) -> float:
    if params.beta_z <= 0:
        raise PreconditionError("beta_z must be positive for a stationary altitude")
    return (params.sigma_zx**2 + params.sigma_zy**2 + params.sigma_zz**2) / (2.0 * params.beta_z)


def velocity_regime(
    params: MovementParams, dt: float
) -> Literal["random_walk", "stationary", "transitional"]:
    """Classify the planar velocity update by beta*dt: << 1 migration-like, >> 1 nesting-like."""
    x = max(params.beta_x, params.beta_y) * _check_dt(dt)
    if x < 0.1:
        return "random_walk"
    if min(params.beta_x, params.beta_y) * dt > 10.0:
        return "stationary"
    return "transitional"
