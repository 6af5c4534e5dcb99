"""Versioned JSON config files: towers, tracker, scenario, receiver model."""

import json
from pathlib import Path
from typing import Literal, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from radiotrack.errors import InputValidationError
from radiotrack.io.files import write_text_atomic
from radiotrack.models import (
    CalibrationResult,
    ReceiverModel,
    ScenarioConfig,
    TowerSite,
    TrackerConfig,
)

FORMAT_VERSION = 1

M = TypeVar("M", bound=BaseModel)


class TowerSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    x: float
    y: float
    height: float
    beam_bearings_deg: list[float]


class TowerFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: Literal[1]
    # grid: counterclockwise from grid east; compass: clockwise from north
    bearing_convention: Literal["grid", "compass"] = "grid"
    towers: list[TowerSpec] = Field(min_length=1)

    def sites(self) -> dict[str, TowerSite]:
        out: dict[str, TowerSite] = {}
        for spec in self.towers:
            bearings = spec.beam_bearings_deg
            if self.bearing_convention == "compass":
                bearings = [(90.0 - b) % 360.0 for b in bearings]
            if spec.id in out:
                raise ValueError(f"duplicate tower id {spec.id!r}")
            out[spec.id] = TowerSite(
                id=spec.id,
                x=spec.x,
                y=spec.y,
                height=spec.height,
                beam_bearings_deg=tuple(bearings),
            )
        return out


class ReceiverFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: Literal[1] = 1
    receiver: ReceiverModel
    residual_rms: float | None = None
    n_samples: int | None = None


def _read(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputValidationError(f"cannot read {path}: {e}") from e


def load_model(path: str | Path, model: type[M]) -> M:
    """Parse and validate a JSON file; any schema problem becomes InputValidationError."""
    try:
        return model.model_validate_json(_read(path))
    except ValidationError as e:
        raise InputValidationError(f"{path}: {e}") from e


def load_towers(path: str | Path) -> dict[str, TowerSite]:
    try:
        return load_model(path, TowerFile).sites()
    except ValueError as e:
        raise InputValidationError(f"{path}: {e}") from e


def load_tracker_config(path: str | Path) -> TrackerConfig:
    return load_model(path, TrackerConfig)


def load_scenario(path: str | Path) -> ScenarioConfig:
    return load_model(path, ScenarioConfig)


def load_receiver(path: str | Path) -> ReceiverModel:
    return load_model(path, ReceiverFile).receiver


def write_receiver_model(result: CalibrationResult, path: str | Path) -> Path:
    doc = ReceiverFile(
        receiver=result.model, residual_rms=result.residual_rms, n_samples=result.n_samples
    )
    return write_text_atomic(path, doc.model_dump_json(indent=2) + "\n")


def write_towers(towers: dict[str, TowerSite] | list[TowerSite], path: str | Path) -> Path:
    sites = towers.values() if isinstance(towers, dict) else towers
    doc = {
        "format_version": FORMAT_VERSION,
        "bearing_convention": "grid",
        "towers": [t.model_dump(mode="json") for t in sites],
    }
    return write_text_atomic(path, json.dumps(doc, indent=2) + "\n")


def write_model(model: BaseModel, path: str | Path) -> Path:
    return write_text_atomic(path, model.model_dump_json(indent=2) + "\n")
