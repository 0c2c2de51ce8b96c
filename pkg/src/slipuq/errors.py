"""Exception types shared across the package."""


class SlipUQError(Exception):
    """Base class for package errors."""


class ConfigError(SlipUQError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class NumericError(SlipUQError):
    """Numerical failure such as solver blow-up (CLI exit code 3)."""


class InstabilityError(NumericError):
    """Forward simulation produced non-finite state."""

    def __init__(self, message, step=None, time_s=None):
        super().__init__(message)
        self.step = step
        self.time_s = time_s


class IntegrityError(SlipUQError):
    """Artifact hashes or schemas do not line up (CLI exit code 4)."""
