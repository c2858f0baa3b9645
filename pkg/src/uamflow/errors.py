"""Exception hierarchy shared across the package.

Every error raised on a documented failure path derives from UamflowError so
the CLI can map failures to distinct diagnostics and exit codes.
"""


class UamflowError(Exception):
    """Base class for all package errors."""


class InvalidCoordinateError(UamflowError):
    """Non-finite or out-of-range geographic coordinate."""


class UnsupportedRegionError(UamflowError):
    """Local tangent-plane projection requested for a degenerate origin."""


class UndefinedBearingError(UamflowError):
    """Relative bearing requested for horizontally coincident positions."""


class MalformedInputError(UamflowError):
    """Trajectory input violates ordering, spacing, or size requirements."""


class DegenerateNormalizationError(UamflowError):
    """A normalization channel has zero standard deviation."""


class ShapeError(UamflowError):
    """Tensor dimensions do not match the model configuration."""


class NumericOverflowError(UamflowError):
    """A transform produced non-finite intermediate values."""


class DivergedTrainingError(UamflowError):
    """Training loss became non-finite.

    Carries ``last_finite_epoch`` (int or None) so callers can recover the
    last usable state.
    """

    def __init__(self, message: str, last_finite_epoch=None):
        super().__init__(message)
        self.last_finite_epoch = last_finite_epoch


class InsufficientHistoryError(UamflowError):
    """Fewer observed points than the model's observation horizon."""


class InvariantViolationError(UamflowError):
    """An internal invariant (e.g. weight normalization) was violated."""


class ConfigError(UamflowError):
    """Configuration file is missing required keys or holds invalid values."""
