"""Combine filter states from detections that share a timestamp."""

from collections.abc import Sequence

import numpy as np

from radiotrack.errors import PreconditionError
from radiotrack.models import FilterState


def fuse_simultaneous(states: Sequence[FilterState]) -> FilterState:
    """Average of the means and element-wise average of the covariances."""
    if not states:
        raise PreconditionError("nothing to fuse")
    t = states[0].t
    if any(s.t != t for s in states):
        raise PreconditionError("fused states must share a timestamp")
    if len(states) == 1:
        return states[0]
    mean = np.mean([s.mean for s in states], axis=0)
    cov = np.mean([s.cov for s in states], axis=0)
    return FilterState(mean=mean, cov=cov, t=t)
