"""Static inversion: planar positions consistent with one display reading at a given altitude."""

import math

import numpy as np
import structlog
from scipy import optimize

from radiotrack.errors import PreconditionError
from radiotrack.models import TowerSite, TrackerConfig
from radiotrack.services.antenna import boresight_gain, power_gain
from radiotrack.services.observation import xi2_from_display

log = structlog.get_logger("radiotrack.static")


def display_to_xi2(display: float, config: TrackerConfig) -> float:
    """xi**2 for a reading; saturated readings are censored just below the ceiling."""
    receiver = config.receiver
    return float(xi2_from_display(receiver, min(float(display), receiver.display_max - 0.5)))


def _farthest_per_row(rows: np.ndarray, cols: np.ndarray, limit: int) -> np.ndarray:
    """Indices of the `limit` largest-`cols` entries in each row, in input order."""
    if len(rows) == 0:
        return np.arange(0)
    order = np.lexsort((-cols, rows))
    sorted_rows = rows[order]
    first = np.r_[True, sorted_rows[1:] != sorted_rows[:-1]]
    start = np.maximum.accumulate(np.where(first, np.arange(len(order)), 0))
    rank = np.arange(len(order)) - start
    return np.sort(order[rank < limit])


def static_inversion_polar(
    display: float,
    tower: TowerSite,
    z: float,
    config: TrackerConfig,
    max_roots_per_psi: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(psi, r) pairs solving g(psi)**2 sin(u)**2 / (k0 R)**2 = xi**2 over the psi grid.

    psi is relative to the beam boresight. Every root in [r_min, r_max] is kept,
    so near-field interference lobes give several ranges for one psi. With
    `max_roots_per_psi` only the farthest roots of each psi are solved for.
    """
    if z <= 0:
        raise PreconditionError(f"altitude must be positive, got {z}")
    xi2 = display_to_xi2(display, config)
    if xi2 <= 0.0:
        return np.empty(0), np.empty(0)

    pattern = config.pattern
    k0 = pattern.k0
    kh = k0 * tower.height * z
    dz2 = (z - tower.height) ** 2

    step = math.radians(config.psi_step_deg)
    n_psi = int(round(2.0 * math.pi / step))
    psi = math.pi - step * np.arange(n_psi)[::-1]
    g2 = np.asarray(power_gain(pattern, psi))

    r = np.geomspace(config.r_min, config.r_max, config.r_grid_points)
    slant = np.sqrt(r * r + dz2)
    height = (np.sin(kh / slant) / (k0 * slant)) ** 2
    f = g2[:, None] * height[None, :] - xi2

    def residual(rr: float, gain2: float) -> float:
        rs = math.sqrt(rr * rr + dz2)
        return gain2 * (math.sin(kh / rs) / (k0 * rs)) ** 2 - xi2

    # grid hits are exact roots; sign changes bracket one root each
    hit_i, hit_k = np.nonzero(f == 0.0)
    cross_i, cross_k = np.nonzero(f[:, :-1] * f[:, 1:] < 0.0)
    rows = np.concatenate([hit_i, cross_i])
    cols = np.concatenate([hit_k, cross_k])
    exact = np.arange(len(rows)) < len(hit_i)
    if max_roots_per_psi is not None:
        keep = _farthest_per_row(rows, cols, max_roots_per_psi)
        rows, cols, exact = rows[keep], cols[keep], exact[keep]

    out_r = np.empty(len(rows))
    for n, (i, k, on_grid) in enumerate(zip(rows, cols, exact)):
        if on_grid:
            out_r[n] = r[k]
        else:
            out_r[n] = optimize.bisect(
                residual, r[k], r[k + 1], args=(g2[i],), xtol=config.r_tol
            )
    return psi[rows], out_r


def static_inversion(
    display: float,
    tower: TowerSite,
    beam_index: int,
    z: float,
    config: TrackerConfig,
    max_roots_per_psi: int | None = None,
) -> np.ndarray:
    """Planar candidates (n, 2) for one reading on one beam; possibly empty."""
    psi, r = static_inversion_polar(display, tower, z, config, max_roots_per_psi)
    phi = tower.bearing(beam_index) + psi
    xy = np.column_stack([tower.x + r * np.cos(phi), tower.y + r * np.sin(phi)])
    log.debug("static_inversion", tower=tower.id, beam=beam_index, z=z, candidates=len(xy))
    return xy.reshape(-1, 2)


def main_beam_range(display: float, tower: TowerSite, z: float, config: TrackerConfig) -> float:
    """Closed-form range for a main-beam, small-grazing-angle arrival: r**2 = H_T z |g(0)| / xi."""
    xi2 = display_to_xi2(display, config)
    if xi2 <= 0.0:
        raise PreconditionError("display at the floor carries no range information")
    return math.sqrt(tower.height * z * boresight_gain(config.pattern) / math.sqrt(xi2))
