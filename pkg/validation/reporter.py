"""Validation reporter: ensemble medians against the acceptance thresholds."""

from dataclasses import dataclass, field

import numpy as np

from validation.collector import SeedResult

MAX_FINAL_ERROR_M = 3000.0
MAX_RMS_DZ = 30.0


@dataclass
class ValidationReport:
    results: list[SeedResult]
    median_final_error_m: float
    median_rms_dz: float
    max_final_error_m: float = MAX_FINAL_ERROR_M
    max_rms_dz: float = MAX_RMS_DZ
    failed_seeds: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (
            self.median_final_error_m < self.max_final_error_m
            and self.median_rms_dz < self.max_rms_dz
        )


def build_report(
    results: list[SeedResult],
    max_final_error_m: float = MAX_FINAL_ERROR_M,
    max_rms_dz: float = MAX_RMS_DZ,
) -> ValidationReport:
    """Failed seeds count as infinite error, so they pull the medians up."""
    if not results:
        raise ValueError("no validation results")
    return ValidationReport(
        results=results,
        median_final_error_m=float(np.median([r.final_error_m for r in results])),
        median_rms_dz=float(np.median([r.rms_dz for r in results])),
        max_final_error_m=max_final_error_m,
        max_rms_dz=max_rms_dz,
        failed_seeds=[r.seed for r in results if not r.ok],
    )


def format_report(report: ValidationReport) -> str:
    lines = [f"{'seed':>6} {'final_err_m':>12} {'rms_dZ':>8} {'points':>7} {'time_s':>7}"]
    for r in report.results:
        note = f"  FAILED: {r.error}" if not r.ok else ""
        lines.append(
            f"{r.seed:>6} {r.final_error_m:>12.1f} {r.rms_dz:>8.2f} "
            f"{r.detections_used:>7} {r.duration_s:>7.2f}{note}"
        )
    lines.append(
        f"median final error {report.median_final_error_m:.1f} m "
        f"(limit {report.max_final_error_m:.0f} m)"
    )
    lines.append(f"median rms dZ {report.median_rms_dz:.2f} (limit {report.max_rms_dz:.0f})")
    lines.append("PASS" if report.passed else "FAIL")
    return "\n".join(lines)
