"""Detection log CSV: tag_id,timestamp,tower_id,beam_index,Z."""

import io
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
import structlog

from radiotrack.errors import DetectionFileError
from radiotrack.io.files import format_timestamps, parse_timestamps, read_data_lines, write_csv
from radiotrack.models import Detection, TowerSite

log = structlog.get_logger("radiotrack.io")

COLUMNS = ["tag_id", "timestamp", "tower_id", "beam_index", "Z"]


def _integers(values: pd.Series) -> tuple[np.ndarray, np.ndarray]:
    """(values, ok) where ok marks entries that parse as whole numbers."""
    num = pd.to_numeric(values, errors="coerce").to_numpy(dtype=float)
    ok = np.isfinite(num) & (num == np.round(num))
    return np.where(ok, num, 0).astype(int), ok


def load_detections(
    path: str | Path, towers: Mapping[str, TowerSite] | None = None
) -> list[Detection]:
    """Parse, validate and time-sort a detection log. Every bad row is reported by line."""
    text, lines = read_data_lines(path)
    if not text:
        return []
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, ValueError) as e:
        raise DetectionFileError(path, [(lines[0], f"unreadable CSV: {e}")]) from e

    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise DetectionFileError(path, [(lines[0], f"missing columns {missing}")])
    if frame.empty:
        return []

    t = parse_timestamps(frame["timestamp"]).to_numpy(dtype=float)
    beam, beam_ok = _integers(frame["beam_index"])
    z, z_ok = _integers(frame["Z"])

    problems: list[tuple[int, str]] = []
    detections = []
    for i, row in enumerate(frame.itertuples(index=False)):
        line = lines[i + 1]
        errs = []
        if not row.tag_id:
            errs.append("empty tag_id")
        if not np.isfinite(t[i]):
            errs.append(f"bad timestamp {row.timestamp!r}")
        if not beam_ok[i] or beam[i] < 0:
            errs.append(f"bad beam_index {row.beam_index!r}")
        if not z_ok[i]:
            errs.append(f"bad Z {row.Z!r}")
        elif not 0 <= z[i] <= 255:
            errs.append(f"Z {z[i]} outside 0..255")
        if towers is not None:
            tower = towers.get(row.tower_id)
            if tower is None:
                errs.append(f"unknown tower {row.tower_id!r}")
            elif beam_ok[i] and not 0 <= beam[i] < tower.n_beams:
                errs.append(f"tower {row.tower_id} has no beam {beam[i]}")
        if errs:
            problems.append((line, "; ".join(errs)))
            continue
        detections.append(
            Detection(
                t=float(t[i]),
                tower_id=row.tower_id,
                beam_index=int(beam[i]),
                display=int(z[i]),
                tag_id=row.tag_id,
            )
        )

    if problems:
        raise DetectionFileError(path, problems)
    log.debug("detections_loaded", path=str(path), count=len(detections))
    return sorted(detections)


def detections_frame(detections: Sequence[Detection]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "tag_id": [d.tag_id for d in detections],
            "timestamp": format_timestamps([d.t for d in detections]),
            "tower_id": [d.tower_id for d in detections],
            "beam_index": [int(d.beam_index) for d in detections],
            "Z": [int(d.display) for d in detections],
        },
        columns=COLUMNS,
    )


def write_detections(
    detections: Sequence[Detection], path: str | Path, header_lines: Iterable[str] = ()
) -> int:
    write_csv(path, detections_frame(detections), header_lines)
    return len(detections)
