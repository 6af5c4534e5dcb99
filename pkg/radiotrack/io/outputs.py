"""Result files: track, signal trace, pattern table, trajectory; calibration input."""

import io
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from radiotrack.errors import InputValidationError
from radiotrack.io.files import format_timestamps, parse_timestamps, read_data_lines, write_csv
from radiotrack.models import (
    CalibrationSample,
    Detection,
    StateVector,
    TowerSite,
    Track,
    TrackPoint,
    Trajectory,
    YagiPattern,
)
from radiotrack.services.antenna import pattern_table
from radiotrack.services.observation import calibration_samples_from_geometry

STATE_COLUMNS = ["x", "vx", "y", "vy", "xz"]
_UPPER = [(i, j) for i in range(5) for j in range(i, 5)]
COV_COLUMNS = [f"cov_{i}{j}" for i, j in _UPPER]
TRACK_COLUMNS = [
    "timestamp",
    "tag_id",
    "segment",
    "tower_id",
    "beam_index",
    "Z",
    "Z_hat",
    *STATE_COLUMNS,
    "z",
    *COV_COLUMNS,
]
TRACE_COLUMNS = ["timestamp", "tower_id", "beam_index", "Z", "Z_hat", "residual"]


def _read_frame(path: str | Path) -> pd.DataFrame:
    text, _ = read_data_lines(path)
    if not text:
        raise InputValidationError(f"{path}: no header")
    return pd.read_csv(io.StringIO(text), float_precision="round_trip")


def track_frame(track: Track) -> pd.DataFrame:
    pts = track.points
    means = track.means
    iu = tuple(np.array(_UPPER).T)
    covs = np.array([p.cov[iu] for p in pts]).reshape(-1, len(_UPPER))
    data = {
        "timestamp": format_timestamps(track.times),
        "tag_id": [track.tag_id] * len(pts),
        "segment": [p.segment for p in pts],
        "tower_id": [p.tower_id for p in pts],
        "beam_index": [p.beam_index for p in pts],
        "Z": [p.display for p in pts],
        "Z_hat": track.predicted_displays,
    }
    for k, name in enumerate(STATE_COLUMNS):
        data[name] = means[:, k]
    data["z"] = means[:, 4] ** 2
    for k, name in enumerate(COV_COLUMNS):
        data[name] = covs[:, k]
    return pd.DataFrame(data, columns=TRACK_COLUMNS)


def emit_track(track: Track, path: str | Path, header_lines: Iterable[str] = ()) -> Path:
    return write_csv(path, track_frame(track), header_lines)


def load_track(path: str | Path) -> Track:
    frame = _read_frame(path)
    missing = [c for c in TRACK_COLUMNS if c not in frame.columns]
    if missing:
        raise InputValidationError(f"{path}: missing columns {missing}")
    times = parse_timestamps(frame["timestamp"].astype(str)).to_numpy(dtype=float)
    tag_id = str(frame["tag_id"].iloc[0]) if len(frame) else "tag-1"
    points = []
    for k, row in enumerate(frame.itertuples(index=False)):
        cov = np.zeros((5, 5))
        for (i, j), name in zip(_UPPER, COV_COLUMNS):
            cov[i, j] = cov[j, i] = getattr(row, name)
        state = StateVector(*(float(getattr(row, c)) for c in STATE_COLUMNS))
        points.append(
            TrackPoint(
                t=float(times[k]),
                state=state,
                cov=cov,
                tower_id=str(row.tower_id),
                beam_index=int(row.beam_index),
                display=int(row.Z),
                predicted_display=float(row.Z_hat),
                segment=int(row.segment),
            )
        )
    return Track(tag_id=tag_id, points=points)


def emit_signal_trace(
    track: Track,
    detections: Sequence[Detection] | None,
    path: str | Path,
    header_lines: Iterable[str] = (),
) -> Path:
    """t, Z, Z_hat per track point; observed Z comes from `detections` when given."""
    pts = track.points
    if detections is not None and len(detections) != len(pts):
        raise InputValidationError("signal trace needs one detection per track point")
    observed = [d.display for d in detections] if detections is not None else track.displays
    z = np.asarray(observed, dtype=float)
    z_hat = track.predicted_displays
    frame = pd.DataFrame(
        {
            "timestamp": format_timestamps(track.times),
            "tower_id": [p.tower_id for p in pts],
            "beam_index": [p.beam_index for p in pts],
            "Z": z.astype(int),
            "Z_hat": z_hat,
            "residual": z_hat - z,
        },
        columns=TRACE_COLUMNS,
    )
    return write_csv(path, frame, header_lines)


def emit_pattern_csv(pattern: YagiPattern, path: str | Path, step_deg: float = 1.0) -> Path:
    header = [f"pattern: {pattern.model_dump_json()}"]
    return write_csv(path, pd.DataFrame(pattern_table(pattern, step_deg)), header)


def emit_trajectory(
    trajectory: Trajectory, path: str | Path, header_lines: Iterable[str] = ()
) -> Path:
    data = {"timestamp": format_timestamps(trajectory.times), "t": trajectory.times}
    for k, name in enumerate(STATE_COLUMNS):
        data[name] = trajectory.states[:, k]
    data["z"] = trajectory.states[:, 4] ** 2
    return write_csv(path, pd.DataFrame(data), header_lines)


def load_trajectory(path: str | Path) -> Trajectory:
    frame = _read_frame(path)
    return Trajectory(
        times=frame["t"].to_numpy(dtype=float),
        states=frame[STATE_COLUMNS].to_numpy(dtype=float),
    )


def load_calibration_samples(
    path: str | Path,
    towers: Mapping[str, TowerSite] | None = None,
    pattern: YagiPattern | None = None,
) -> list[CalibrationSample]:
    """Either `xi,Z` columns, or survey geometry `x,y,z,tower_id,beam_index,Z`."""
    frame = _read_frame(path)
    if "Z" not in frame.columns:
        raise InputValidationError(f"{path}: calibration data needs a Z column")
    if "xi" in frame.columns:
        return [CalibrationSample(float(a), float(b)) for a, b in zip(frame["xi"], frame["Z"])]
    needed = {"x", "y", "z", "tower_id", "beam_index"}
    if not needed <= set(frame.columns):
        raise InputValidationError(f"{path}: need xi or {sorted(needed)} columns")
    if towers is None:
        raise InputValidationError("geometry calibration rows need a tower file")
    frame["tower_id"] = frame["tower_id"].astype(str)
    return calibration_samples_from_geometry(frame, towers, pattern or YagiPattern())
