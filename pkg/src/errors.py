"""
Exception Hierarchy

Every error raised by the library derives from DiffLabError and carries the
exit code the CLI reports for it.
"""


class DiffLabError(Exception):
    """Base exception for all laboratory errors."""

    exit_code: int = 1


class UsageError(DiffLabError):
    """Invalid arguments or configuration."""

    exit_code = 2


class InputMissingError(DiffLabError):
    """A required input file does not exist or cannot be read."""

    exit_code = 3


class ObjectiveMismatchError(DiffLabError):
    """Sampler kind does not match the objective a checkpoint was trained on."""

    exit_code = 4


class NumericalError(DiffLabError):
    """Non-finite values or impossible probabilities."""

    exit_code = 5


class ScheduleError(UsageError):
    """Raised for invalid variance schedule parameters."""

    pass


class TargetError(UsageError):
    """Raised for invalid mixture parameters."""

    pass


class StepRangeError(UsageError):
    """Raised when a diffusion step index falls outside [0, T)."""

    pass


class CheckpointError(InputMissingError):
    """Raised when a checkpoint is missing or does not match the architecture."""

    pass


class ImpossibleEvidenceError(NumericalError):
    """Raised when an observed (x_0, x_t) pair has zero probability."""

    pass


class ImpossiblePredictionError(NumericalError):
    """Raised when every reverse-step term vanishes."""

    pass
