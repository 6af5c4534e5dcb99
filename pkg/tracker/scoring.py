"""delta-Z: time-weighted RMS between predicted and observed display values."""

from collections.abc import Sequence

import numpy as np

from radiotrack.errors import PreconditionError
from radiotrack.models import Detection, Track


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    """Quadrature weights for samples at irregular `times`; uniform if they span no time."""
    t = np.asarray(times, dtype=float)
    n = len(t)
    if n == 1 or t[-1] == t[0]:
        return np.full(n, 1.0 / n)
    w = np.empty(n)
    w[0] = 0.5 * (t[1] - t[0])
    w[-1] = 0.5 * (t[-1] - t[-2])
    w[1:-1] = 0.5 * (t[2:] - t[:-2])
    return w / w.sum()


def weighted_rms(times, predicted, observed):
    """RMS of predicted - observed; `predicted` may carry a trailing batch axis."""
    if len(times) == 0:
        raise PreconditionError("cannot score an empty track")
    w = trapezoid_weights(times)
    pred = np.asarray(predicted, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if pred.ndim > obs.ndim:
        obs = obs.reshape(obs.shape + (1,) * (pred.ndim - obs.ndim))
        w = w.reshape(w.shape + (1,) * (pred.ndim - 1))
    return np.sqrt(np.sum(w * (pred - obs) ** 2, axis=0))


def score_track(track: Track, detections: Sequence[Detection]) -> float:
    if len(track) == 0:
        raise PreconditionError("cannot score an empty track")
    if len(detections) != len(track):
        raise PreconditionError("track and detections are not aligned")
    observed = [d.display for d in detections]
    return float(weighted_rms(track.times, track.predicted_displays, observed))
