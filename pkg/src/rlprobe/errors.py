"""Shared exception types."""


class DimensionError(ValueError):
    """Shapes of inputs do not match what an operation expects."""


class NumericError(ValueError):
    """A value is NaN/Inf where a finite number is required."""


class StateError(RuntimeError):
    """An operation was called in an invalid state (e.g. step after terminal)."""


class InputError(ValueError):
    """A user-supplied argument is out of range or malformed."""


class ConfigError(ValueError):
    """A configuration value violates its constraints."""


class FormatError(ValueError):
    """A binary file does not conform to its on-disk format."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""
