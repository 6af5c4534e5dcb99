"""Initial-state search: candidate enumeration from static inversion, delta-Z
selection, and reinitialization after a measurement gap."""

import math
from collections.abc import Mapping, Sequence

import numpy as np
import structlog
from scipy.spatial import KDTree

from radiotrack.errors import InitializationError, NumericalError, PreconditionError
from radiotrack.models import Detection, FilterState, StateVector, TowerSite, Track, TrackerConfig
from tracker.runner import Epoch, run_segment, track_points
from tracker.scoring import weighted_rms
from tracker.static import static_inversion

log = structlog.get_logger("radiotrack.initializer")


def enumerate_initial_states(
    d0: Detection,
    d1: Detection,
    towers: Mapping[str, TowerSite],
    config: TrackerConfig,
    z0: float | None = None,
) -> np.ndarray:
    """Candidate initial states (n, 5) from every speed-feasible pair of static positions.

    Rows are [x0, (x1 - x0)/dt, y0, (y1 - y0)/dt, sqrt(z0)].
    """
    dt = d1.t - d0.t
    if dt <= 0:
        raise PreconditionError("initialization detections must be strictly ordered in time")
    z0 = config.z0 if z0 is None else z0

    limit = config.roots_per_psi
    c0 = static_inversion(d0.display, towers[d0.tower_id], d0.beam_index, z0, config, limit)
    c1 = static_inversion(d1.display, towers[d1.tower_id], d1.beam_index, z0, config, limit)
    if len(c0) == 0 or len(c1) == 0:
        raise InitializationError(f"no static solutions at z0={z0} for the first detections")

    reach = config.v_max * dt
    pairs = KDTree(c1).query_ball_point(c0, r=reach, return_sorted=True)
    i = np.repeat(np.arange(len(c0)), [len(p) for p in pairs])
    j = np.fromiter((k for p in pairs for k in p), dtype=int, count=len(i))
    if len(i) == 0:
        raise InitializationError(f"no candidate pair satisfies v_max={config.v_max} m/s")

    velocity = (c1[j] - c0[i]) / dt
    out = np.column_stack(
        [c0[i, 0], velocity[:, 0], c0[i, 1], velocity[:, 1], np.full(len(i), math.sqrt(z0))]
    )
    log.debug("candidates_enumerated", count=len(out), z0=z0, reach_m=reach)
    return out


def _scores(run) -> tuple[np.ndarray, np.ndarray]:
    """(delta-Z, final covariance trace) per candidate; failed runs score inf."""
    dz = np.asarray(weighted_rms(run.times, run.predicted, run.observed), dtype=float)
    dz = np.where(run.failed | ~np.isfinite(dz), np.inf, dz)
    trace = np.trace(run.final.cov, axis1=-2, axis2=-1)
    return dz, trace


def _best(dz: np.ndarray, trace: np.ndarray, index: np.ndarray, keep: int) -> np.ndarray:
    """Positions of the `keep` best by delta-Z, then covariance trace, then input order."""
    return np.lexsort((index, trace, dz))[:keep]


def _prescreen(
    candidates: np.ndarray,
    epochs: Sequence[Epoch],
    towers: Mapping[str, TowerSite],
    config: TrackerConfig,
) -> np.ndarray:
    """Indices of the `candidate_cap` best candidates over the first epochs.

    Runs at most `prescreen_batch` filters at a time and keeps a running best set.
    """
    head = epochs[: config.prescreen_epochs]
    kept = np.arange(0)
    kept_dz = np.empty(0)
    kept_trace = np.empty(0)
    for start in range(0, len(candidates), config.prescreen_batch):
        index = np.arange(start, min(start + config.prescreen_batch, len(candidates)))
        dz, trace = _scores(run_segment(candidates[index], head[0].t, head, towers, config))
        index = np.concatenate([kept, index])
        dz = np.concatenate([kept_dz, dz])
        trace = np.concatenate([kept_trace, trace])
        best = _best(dz, trace, index, config.candidate_cap)
        kept, kept_dz, kept_trace = index[best], dz[best], trace[best]
    log.info(
        "candidates_prescreened",
        candidates=len(candidates),
        kept=len(kept),
        epochs=len(head),
        batches=-(-len(candidates) // config.prescreen_batch),
    )
    return np.sort(kept)


def select_initial_state(
    candidates,
    epochs: Sequence[Epoch],
    towers: Mapping[str, TowerSite],
    config: TrackerConfig,
    segment: int = 0,
    tag_id: str = "tag-1",
) -> tuple[StateVector, Track]:
    """Run a filter from every candidate and keep the one with the smallest delta-Z."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.shape[0] == 0:
        raise InitializationError("no initial candidates")

    if candidates.shape[0] > config.candidate_cap:
        candidates = candidates[_prescreen(candidates, epochs, towers, config)]

    run = run_segment(candidates, epochs[0].t, epochs, towers, config)
    dz, trace = _scores(run)
    best = int(_best(dz, trace, np.arange(len(dz)), 1)[0])
    if not np.isfinite(dz[best]):
        raise NumericalError("every candidate filter failed")
    log.info("initial_state_selected", candidates=len(candidates), delta_z=float(dz[best]))
    track = Track(tag_id=tag_id, points=track_points(run, best, epochs, segment))
    return StateVector.from_array(candidates[best]), track


def handle_gap(
    prev: FilterState,
    gap: float,
    d0: Detection,
    d1: Detection,
    towers: Mapping[str, TowerSite],
    config: TrackerConfig,
) -> StateVector:
    """Reinitialize after a gap: farthest reachable candidate, altitude carried over."""
    if not gap > config.t_gap_max:
        raise PreconditionError(
            f"gap of {gap} s does not exceed t_gap_max={config.t_gap_max} s; keep filtering"
        )
    last = prev.state
    z_p = last.z
    if not z_p > 0:
        log.warning("gap_altitude_reset", z_prev=z_p, z0=config.z0)
        z_p = config.z0

    candidates = enumerate_initial_states(d0, d1, towers, config, z0=z_p)
    dist = np.hypot(candidates[:, 0] - last.x, candidates[:, 2] - last.y)
    reachable = dist <= config.v_max * gap
    if reachable.any():
        pick = int(np.argmax(np.where(reachable, dist, -np.inf)))
    else:
        log.warning("gap_unreachable", gap_s=gap, nearest_m=float(dist.min()))
        pick = int(np.argmax(dist))
    log.info(
        "gap_reinitialized",
        gap_s=gap,
        jump_m=float(dist[pick]),
        reachable=bool(reachable[pick]),
    )
    return StateVector.from_array(candidates[pick])
