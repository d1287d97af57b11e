"""Exception types raised across global-motion-tools."""


class GlobalMotionError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(GlobalMotionError, ValueError):
    """Input is malformed: non-finite values, empty sequences, bad specs, length mismatches."""


class InvalidRotationError(InvalidInputError):
    """A matrix that should be a rotation is not orthonormal with determinant 1."""


class Degenerate6DError(InvalidInputError):
    """A 6D rotation pair is rank deficient (zero or parallel columns)."""


class ShapeMismatchError(InvalidInputError):
    """Array shapes disagree with the skeleton, network config, or each other."""


class ConfigError(InvalidInputError):
    """A config file or mapping could not be parsed or contains unknown keys."""


class NumericFailureError(GlobalMotionError, ArithmeticError):
    """A computation produced non-finite values (e.g. a diverging training loss)."""
