"""Exception hierarchy shared by services and the CLI"""

from typing import Optional


class AsyncOptError(Exception):
    """Base class for all library errors"""

    exit_code = 1


class ConfigError(AsyncOptError, ValueError):
    """Invalid configuration or input data"""

    exit_code = 2


class DatasetFormatError(ConfigError):
    """Malformed libsvm input"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class AdmissibilityError(AsyncOptError):
    """Step-size policy violates the window-sum condition"""

    exit_code = 3

    def __init__(self, first_violation: int, window_sum: float, limit: float):
        self.first_violation = first_violation
        self.window_sum = window_sum
        self.limit = limit
        super().__init__(
            f"step-size window sum {window_sum!r} exceeds {limit!r} at k={first_violation}"
        )


class InvariantViolation(AsyncOptError, RuntimeError):
    """Internal state broke an invariant the algorithms rely on"""

    exit_code = 4


class StageError(AsyncOptError):
    """Failure inside a named experiment pipeline stage"""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
