"""Exception hierarchy for EDCFlow.

Library code raises these; only the command-line layer turns them into
process exit codes (see ``exit_code`` on each family).
"""


class EDCFlowError(Exception):
    """Base class for every error raised by this package."""

    exit_code: int = 1


# Input errors (exit 2)


class InputError(EDCFlowError):
    """Malformed or unusable input data."""

    exit_code = 2


class EventFileError(InputError):
    """An event text file could not be parsed."""


class FlowFileError(InputError):
    """A flow file could not be parsed."""


class CheckpointError(InputError):
    """A checkpoint container is corrupt or unreadable."""


class EmptyWindow(InputError):
    """An operation needs at least one event but the stream is empty."""


class OutOfBounds(InputError):
    """An event lies outside the sensor rectangle or its time window."""


class EmptyGroundTruth(InputError):
    """A loss or metric was asked to average over zero valid pixels."""


# Configuration errors (exit 3)


class ConfigError(EDCFlowError):
    """Invalid configuration or incompatible shapes."""

    exit_code = 3


class InvalidConfig(ConfigError):
    """A configuration value is out of its declared range."""


class ShapeError(ConfigError):
    """Tensor shapes do not agree with what an operation requires."""


class CheckpointMismatch(ConfigError):
    """A checkpoint does not match the requested model configuration."""


class DegenerateScene(ConfigError):
    """A synthetic scene cannot produce events (constant texture)."""


# Numeric errors (exit 4)


class NumericError(EDCFlowError):
    """Numeric divergence during optimization or gradient evaluation."""

    exit_code = 4


class GradError(NumericError):
    """A gradient contains non-finite values."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""


class ScalingError(NumericError):
    """Measured complexity scaling disagrees with the expected exponent."""
