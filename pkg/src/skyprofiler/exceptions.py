"""Exception types shared across the package."""


class SkyProfilerError(Exception):
    """Base class for all package errors."""


class ConfigError(SkyProfilerError):
    """Invalid configuration or invalid argument values."""


class NumericalError(SkyProfilerError):
    """A numerical operation failed (singular matrix, non-finite value).

    Carries the timestep index when the failure happened inside a
    recursive filter pass, so the caller can report which step broke.
    """

    def __init__(self, message, timestep_index=None):
        if timestep_index is not None:
            message = f"{message} (timestep {timestep_index})"
        super().__init__(message)
        self.timestep_index = timestep_index


class InsufficientDataError(SkyProfilerError):
    """Not enough samples to fit a model."""
