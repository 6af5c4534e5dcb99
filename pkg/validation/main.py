"""Validation run: one-shot collect, score, report over a seeded ensemble."""

import sys

from radiotrack.logs import configure_logging
from validation.collector import collect
from validation.reporter import ValidationReport, build_report, format_report


def run_validation(n_seeds: int = 20, first_seed: int = 0) -> ValidationReport:
    results = collect(list(range(first_seed, first_seed + n_seeds)))
    return build_report(results)


def main() -> int:
    configure_logging()
    report = run_validation()
    print(format_report(report))
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
