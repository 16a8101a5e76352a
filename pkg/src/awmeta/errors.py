"""Exception types shared across the package."""


class AwmetaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AwmetaError, ValueError):
    """Array shapes do not line up with the declared contract."""


class ValidationError(AwmetaError, ValueError):
    """A value violates a precondition (non-distribution target, bad rate, ...)."""


class DomainError(AwmetaError, ValueError):
    """An argument is outside its legal domain (N > O, index out of range, ...)."""


class SamplingError(AwmetaError, ValueError):
    """The dataset cannot supply the requested episode."""


class ConfigError(AwmetaError, ValueError):
    """An experiment configuration is inconsistent or incomplete."""


class UsageError(AwmetaError, RuntimeError):
    """An operation was called out of order or with stale state."""


class FeatureFileError(AwmetaError, ValueError):
    """A feature file is malformed. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class CheckpointError(AwmetaError, ValueError):
    """A checkpoint file is malformed or incompatible."""
