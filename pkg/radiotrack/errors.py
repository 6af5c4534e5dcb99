"""Error hierarchy. Each class carries the CLI exit code it maps to."""


class RadioTrackError(Exception):
    exit_code = 1


class InputValidationError(RadioTrackError):
    """Bad input: malformed files, unknown ids, values outside their domain."""

    exit_code = 2


class PreconditionError(InputValidationError, ValueError):
    """A documented precondition was violated (negative dt, time regression, ...)."""


class DisplayRangeError(InputValidationError):
    pass


class SaturationError(DisplayRangeError):
    """Display value at or above the ceiling; the receiver map is not invertible there."""


class BelowFloorError(DisplayRangeError):
    pass


class DetectionFileError(InputValidationError):
    def __init__(self, path, problems: list[tuple[int, str]]):
        self.path = path
        self.problems = problems
        lines = "; ".join(f"line {n}: {msg}" for n, msg in problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        super().__init__(f"{path}: {lines}{more}")


class InsufficientDetectionsError(InputValidationError):
    pass


class NumericalError(RadioTrackError):
    """The computation itself broke down (non-positive innovation variance, non-PSD, ...)."""

    exit_code = 3


class DegenerateGeometryError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class PatternError(NumericalError):
    pass


class CalibrationError(NumericalError):
    pass


class InitializationError(NumericalError):
    pass
