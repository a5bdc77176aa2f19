"""Exception hierarchy shared by all pipeline stages.

Each class carries the CLI exit code it maps to.
"""


class CarefulnessError(Exception):
    exit_code = 1


class ConfigError(CarefulnessError, ValueError):
    """Invalid configuration value or configuration/data incompatibility."""

    exit_code = 2


class InputError(CarefulnessError, ValueError):
    """Rejected input: wrong shape, non-finite values, empty sequences."""

    exit_code = 4


class StreamError(CarefulnessError, ValueError):
    """Stream ordering violated (e.g. non-increasing timestamps)."""

    exit_code = 4


class DataError(CarefulnessError, ValueError):
    """Malformed data file or dataset unusable for the requested operation."""

    exit_code = 4

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InsufficientDataError(DataError):
    pass


class TrainingError(DataError):
    pass


class GenerationError(CarefulnessError, ValueError):
    exit_code = 4


class StreamIOError(CarefulnessError, OSError):
    """Unreadable or truncated frame stream."""

    exit_code = 3

    def __init__(self, message, frame_index=None):
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)
        self.frame_index = frame_index
