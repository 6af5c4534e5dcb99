"""Tracker: detections in, estimated 3D track out.

Readings below the display threshold are dropped, the rest are grouped into
epochs (equal timestamps) and split into segments wherever the time between
epochs exceeds the gap limit. The first segment starts from the best
delta-Z candidate; later segments are reinitialized by the gap rule.
"""

from collections.abc import Iterable, Mapping, Sequence

import structlog

from radiotrack.errors import (
    InitializationError,
    InputValidationError,
    InsufficientDetectionsError,
)
from radiotrack.models import Detection, FilterState, TowerSite, Track, TrackerConfig
from tracker.initializer import enumerate_initial_states, handle_gap, select_initial_state
from tracker.runner import Epoch, group_epochs, run_segment, track_points

log = structlog.get_logger("radiotrack.tracker")


def tower_map(towers: Mapping[str, TowerSite] | Iterable[TowerSite]) -> dict[str, TowerSite]:
    if isinstance(towers, Mapping):
        return dict(towers)
    return {t.id: t for t in towers}


def check_bindings(detections: Iterable[Detection], towers: Mapping[str, TowerSite]) -> None:
    for d in detections:
        tower = towers.get(d.tower_id)
        if tower is None:
            raise InputValidationError(f"detection at t={d.t} names unknown tower {d.tower_id!r}")
        if not 0 <= d.beam_index < tower.n_beams:
            raise InputValidationError(
                f"detection at t={d.t}: tower {d.tower_id} has no beam {d.beam_index}"
            )
        if not 0 <= d.display <= 255:
            raise InputValidationError(f"detection at t={d.t}: display {d.display} out of range")


def split_segments(epochs: Sequence[Epoch], t_gap_max: float) -> list[list[Epoch]]:
    segments: list[list[Epoch]] = []
    for epoch in epochs:
        if not segments or epoch.t - segments[-1][-1].t > t_gap_max:
            segments.append([])
        segments[-1].append(epoch)
    return segments


def track(
    detections: Sequence[Detection],
    towers: Mapping[str, TowerSite] | Iterable[TowerSite],
    config: TrackerConfig,
    tag_id: str | None = None,
) -> Track:
    towers = tower_map(towers)
    check_bindings(detections, towers)
    usable = sorted(d for d in detections if d.display >= config.z_threshold)
    if len(usable) < 2:
        raise InsufficientDetectionsError(
            f"{len(usable)} detection(s) at or above Z={config.z_threshold}; need 2"
        )
    tag_id = tag_id or usable[0].tag_id

    segments = split_segments(group_epochs(usable), config.t_gap_max)
    log.info(
        "tracking_started",
        detections=len(usable),
        dropped=len(detections) - len(usable),
        segments=len(segments),
    )

    result = Track(tag_id=tag_id)
    prev: FilterState | None = None
    segment_id = 0
    for seg in segments:
        if prev is None:
            if len(seg) < 2:
                log.warning("segment_skipped", t=seg[0].t, reason="single epoch before first fix")
                continue
            candidates = enumerate_initial_states(
                seg[0].detections[0], seg[1].detections[0], towers, config
            )
            _, seg_track = select_initial_state(
                candidates, seg, towers, config, segment=segment_id, tag_id=tag_id
            )
            points = seg_track.points
        else:
            run = _reinitialize(prev, seg, towers, config)
            if run.failed.any():
                log.warning("segment_filter_failed", segment=segment_id, t=seg[0].t)
            points = track_points(run, 0, seg, segment_id)

        result.points.extend(points)
        last = points[-1]
        prev = FilterState(mean=last.state.as_array(), cov=last.cov, t=last.t)
        log.debug("segment_finished", segment=segment_id, points=len(points))
        segment_id += 1

    if not result.points:
        raise InsufficientDetectionsError("no segment had two epochs to initialize from")
    return result


def _reinitialize(prev: FilterState, seg: list[Epoch], towers, config: TrackerConfig):
    gap = seg[0].t - prev.t
    if len(seg) >= 2:
        try:
            x0 = handle_gap(prev, gap, seg[0].detections[0], seg[1].detections[0], towers, config)
            return run_segment(x0.as_array(), seg[0].t, seg, towers, config)
        except InitializationError as e:
            log.warning("gap_reinit_failed", gap_s=gap, error=str(e))
    # carry the pre-gap posterior across
    return run_segment(prev.mean, prev.t, seg, towers, config, cov=prev.cov)
