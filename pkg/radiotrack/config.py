"""radiotrack configuration. Process-level tunables in one place.

Run parameters (towers, movement model, receiver, tracker) live in JSON files
validated by radiotrack.io.schemas; this module only carries settings that
come from the environment.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


def _flag(name: str, default: str = "0") -> bool:
    return os.environ.get(name, default).strip().lower() in ("1", "true", "yes", "on")


@dataclass
class LogConfig:
    level: str = field(default_factory=lambda: os.environ.get("RADIOTRACK_LOG_LEVEL", "INFO"))
    json: bool = field(default_factory=lambda: _flag("RADIOTRACK_LOG_JSON"))


@dataclass
class NumericsConfig:
    # Symmetry/PSD assertions after every filter step
    debug_checks: bool = field(default_factory=lambda: _flag("RADIOTRACK_DEBUG"))
    psd_rel_tol: float = 1e-8
    rank_rel_tol: float = 1e-10
    quad_epsrel: float = 1e-10
    quad_limit: int = 200


@dataclass
class OutputConfig:
    out_dir: Path = field(
        default_factory=lambda: Path(os.environ.get("RADIOTRACK_OUTPUT_DIR", "out"))
    )


@dataclass
class Config:
    log: LogConfig = field(default_factory=LogConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


config = Config()
