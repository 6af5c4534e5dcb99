"""Analytical Yagi field pattern: half-wave dipole element times a uniform
Hansen-Woodyard end-fire line source. Azimuth only."""

import math

import numpy as np
from scipy import optimize

from radiotrack.errors import PatternError
from radiotrack.models import YagiPattern

_COS_EPS = 1e-12
_HALF_PI = 0.5 * math.pi


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    wrapped = math.pi - np.mod(math.pi - np.asarray(a, dtype=float), 2.0 * math.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def _out(a: np.ndarray):
    return float(a) if a.ndim == 0 else a


def field_pattern(pattern: YagiPattern, psi):
    """g(psi); accepts scalars or arrays. The dipole factor is 0 at psi = +-pi/2."""
    psi = np.asarray(wrap_angle(psi), dtype=float)
    s, c = np.sin(psi), np.cos(psi)
    edge = np.abs(c) < _COS_EPS
    dipole = np.where(edge, 0.0, np.cos(_HALF_PI * s) / np.where(edge, 1.0, c))
    # p + q*cos(psi) < 0 for every valid pattern, so no 0/0 here
    w = pattern.p + pattern.q * c
    return _out(dipole * np.sin(w) / w)


def pattern_slope(pattern: YagiPattern, psi):
    """dg/dpsi."""
    psi = np.asarray(wrap_angle(psi), dtype=float)
    s, c = np.sin(psi), np.cos(psi)
    edge = np.abs(c) < _COS_EPS
    safe_c = np.where(edge, 1.0, c)
    dipole = np.where(edge, 0.0, np.cos(_HALF_PI * s) / safe_c)
    ddipole = -_HALF_PI * np.sin(_HALF_PI * s) + np.where(
        edge, 0.25 * math.pi * s, dipole * s / safe_c
    )
    w = pattern.p + pattern.q * c
    line = np.sin(w) / w
    dline = (w * np.cos(w) - np.sin(w)) / (w * w) * (-pattern.q * s)
    return _out(ddipole * line + dipole * dline)


def power_gain(pattern: YagiPattern, psi):
    g = np.asarray(field_pattern(pattern, psi))
    return _out(g * g)


def boresight_gain(pattern: YagiPattern) -> float:
    """|g(0)| = |sin(p+q)/(p+q)|."""
    w = pattern.p + pattern.q
    return abs(math.sin(w) / w)


def half_power_beamwidth(pattern: YagiPattern, grid_points: int = 3601) -> float:
    """Full half-power beamwidth in degrees."""
    g0 = power_gain(pattern, 0.0)
    if g0 <= 0.0:
        raise PatternError("no main lobe at boresight")
    target = 0.5 * g0

    psi = np.linspace(0.0, math.pi, grid_points)
    below = np.nonzero(np.asarray(power_gain(pattern, psi)) < target)[0]
    if len(below) == 0:
        raise PatternError("pattern never drops to half power")
    k = int(below[0])
    edge = optimize.bisect(
        lambda a: power_gain(pattern, a) - target, psi[k - 1], psi[k], xtol=1e-6
    )
    # g is even, so the crossings sit at +-edge
    return math.degrees(2.0 * edge)


def front_to_back_db(pattern: YagiPattern) -> float:
    back = power_gain(pattern, math.pi)
    if back == 0.0:
        return math.inf
    return 10.0 * math.log10(power_gain(pattern, 0.0) / back)


def pattern_table(pattern: YagiPattern, step_deg: float = 1.0) -> dict[str, np.ndarray]:
    """Columns for plotting: psi_deg, g, g2, db (relative to boresight, floored at -200)."""
    psi_deg = np.arange(-180.0, 180.0 + 0.5 * step_deg, step_deg)
    psi_deg = psi_deg[psi_deg <= 180.0]
    g = np.asarray(field_pattern(pattern, np.radians(psi_deg)))
    g2 = g * g
    db = 10.0 * np.log10(np.maximum(g2 / power_gain(pattern, 0.0), 1e-20))
    return {"psi_deg": psi_deg, "g": g, "g2": g2, "db": db}
