"""Batched EKF runs over grouped detection epochs.

One run advances every candidate initial state through the same epochs at
once; candidates that break numerically are frozen and flagged instead of
aborting the batch.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from itertools import groupby

import numpy as np
import structlog

from radiotrack.models import (
    Detection,
    FilterState,
    Measurement,
    StateVector,
    TowerSite,
    TrackerConfig,
    TrackPoint,
)
from radiotrack.services import ekf
from radiotrack.services.observation import (
    display_from_xi,
    measurement_rows,
    power_variance,
    xi2_from_display,
    xi_batch,
)
from tracker.fusion import fuse_simultaneous

log = structlog.get_logger("radiotrack.runner")


@dataclass(frozen=True)
class Epoch:
    t: float
    detections: tuple[Detection, ...]


@dataclass
class SegmentRun:
    posteriors: list[FilterState]  # one per epoch, batched
    predicted: np.ndarray  # (n_detections, batch)
    observed: np.ndarray  # (n_detections,)
    times: np.ndarray  # (n_detections,)
    failed: np.ndarray  # (batch,)

    @property
    def final(self) -> FilterState:
        return self.posteriors[-1]


def group_epochs(detections: Sequence[Detection]) -> list[Epoch]:
    """Group time-sorted detections by identical timestamp."""
    return [Epoch(t, tuple(group)) for t, group in groupby(detections, key=lambda d: d.t)]


def _measurement(
    d: Detection, prior: FilterState, tower: TowerSite, config: TrackerConfig
) -> Measurement:
    receiver = config.receiver
    ceiling = receiver.display_max - 0.5
    display = float(d.display)
    inflate = 1.0
    if display >= ceiling:
        # censored: invert just below saturation, trust it less
        display = ceiling
        inflate = config.saturation_var_factor
    p0 = receiver.p0
    y = float(xi2_from_display(receiver, display)) + p0
    xi_pred = xi_batch(prior.mean, tower, d.beam_index, config.pattern)
    r_var = config.r_var_multiplier * inflate * np.asarray(power_variance(xi_pred, p0))
    return Measurement(y=y, r_var=r_var, t=d.t, tower_id=d.tower_id, beam_index=d.beam_index)


def run_segment(
    means: np.ndarray,
    t0: float,
    epochs: Sequence[Epoch],
    towers: Mapping[str, TowerSite],
    config: TrackerConfig,
    cov: np.ndarray | None = None,
) -> SegmentRun:
    """Filter a batch of initial means (batch, 5) through `epochs`."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    fs = ekf.initial_state(means, config.initial_cov_diag, t0)
    if cov is not None:
        fs = FilterState(mean=fs.mean, cov=np.broadcast_to(cov, fs.cov.shape).copy(), t=t0)
    batch = means.shape[0]
    failed = np.zeros(batch, dtype=bool)
    pattern, p0 = config.pattern, config.receiver.p0

    posteriors, predicted, observed, times = [], [], [], []
    for epoch in epochs:
        prior = ekf.predict(fs, config.movement, epoch.t)
        branches = []
        for d in epoch.detections:
            tower = towers[d.tower_id]
            m = _measurement(d, prior, tower, config)

            def rows(mean, tower=tower, beam=d.beam_index):
                return measurement_rows(mean, tower, beam, pattern, p0)

            with np.errstate(all="ignore"):
                post, _, f = ekf.update(prior, m, rows, joseph=config.joseph, strict=False)
            failed |= np.isnan(f)
            branches.append(post)
        post = fuse_simultaneous(branches)

        broken = ~np.all(np.isfinite(post.mean), axis=-1) | ~np.all(
            np.isfinite(post.cov), axis=(-1, -2)
        )
        failed |= broken
        # frozen rows keep their last finite state so later steps stay finite
        mean = np.where(failed[:, None], fs.mean, post.mean)
        cov_next = np.where(failed[:, None, None], fs.cov, post.cov)
        fs = FilterState(mean=mean, cov=cov_next, t=epoch.t)
        posteriors.append(fs)

        for d in epoch.detections:
            xi_post = xi_batch(fs.mean, towers[d.tower_id], d.beam_index, pattern)
            predicted.append(np.asarray(display_from_xi(config.receiver, xi_post)))
            observed.append(d.display)
            times.append(d.t)

    if failed.any():
        log.debug("candidates_failed", failed=int(failed.sum()), batch=batch)
    return SegmentRun(
        posteriors=posteriors,
        predicted=np.asarray(predicted, dtype=float).reshape(len(predicted), batch),
        observed=np.asarray(observed, dtype=float),
        times=np.asarray(times, dtype=float),
        failed=failed,
    )


def track_points(
    run: SegmentRun, index: int, epochs: Sequence[Epoch], segment: int
) -> list[TrackPoint]:
    """Track points of one batch member: one per detection, sharing the epoch posterior."""
    points = []
    k = 0
    for fs, epoch in zip(run.posteriors, epochs):
        state = StateVector.from_array(fs.mean[index])
        cov = np.array(fs.cov[index])
        for d in epoch.detections:
            points.append(
                TrackPoint(
                    t=d.t,
                    state=state,
                    cov=cov,
                    tower_id=d.tower_id,
                    beam_index=d.beam_index,
                    display=d.display,
                    predicted_display=float(run.predicted[k, index]),
                    segment=segment,
                )
            )
            k += 1
    return points
