"""Shared file plumbing: atomic writes, ISO-8601 timestamps, commented CSV headers."""

import io
import os
import tempfile
from collections.abc import Iterable
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from radiotrack.errors import InputValidationError

UTC = timezone.utc

COMMENT = "#"


class OutputError(InputValidationError):
    """An output path could not be written."""


def write_text_atomic(path: str | Path, text: str) -> Path:
    """Write via a temp file in the target directory, then rename over the target."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    return path


def write_csv(path: str | Path, frame: pd.DataFrame, header_lines: Iterable[str] = ()) -> Path:
    buf = io.StringIO()
    for line in header_lines:
        for part in str(line).splitlines():
            buf.write(f"{COMMENT} {part}\n")
    frame.to_csv(buf, index=False, lineterminator="\n")
    return write_text_atomic(path, buf.getvalue())


def read_data_lines(path: str | Path) -> tuple[str, list[int]]:
    """File text without comment/blank lines, plus the 1-based source line of each kept line."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputValidationError(f"cannot read {path}: {e}") from e
    kept, numbers = [], []
    for n, line in enumerate(raw.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(COMMENT):
            continue
        kept.append(line)
        numbers.append(n)
    return "\n".join(kept) + ("\n" if kept else ""), numbers


def format_timestamp(t: float) -> str:
    return datetime.fromtimestamp(round(float(t), 3), UTC).isoformat(timespec="milliseconds")


def format_timestamps(times) -> list[str]:
    return [format_timestamp(t) for t in np.asarray(times, dtype=float)]


def parse_timestamps(values: pd.Series) -> pd.Series:
    """ISO-8601 strings to float UTC seconds rounded to ms; unparseable entries become NaN."""
    parsed = pd.to_datetime(values, utc=True, errors="coerce", format="ISO8601")
    seconds = (parsed - pd.Timestamp(0, tz="UTC")) / pd.Timedelta(seconds=1)
    return seconds.round(3)
