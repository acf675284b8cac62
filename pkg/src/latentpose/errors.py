"""Exception types shared across the package."""


class LatentPoseError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(LatentPoseError, ValueError):
    """Operand shapes do not conform."""


class ParameterError(LatentPoseError, ValueError):
    """A hyperparameter or argument is out of its allowed range."""


class DomainError(LatentPoseError, ValueError):
    """A value lies outside the domain of a mathematical operation."""


class RangeError(LatentPoseError, ValueError):
    """A pose cannot be rendered inside the image frame."""


class FormatError(LatentPoseError, ValueError):
    """A persisted file is malformed, truncated or of the wrong version."""


class ConfigError(LatentPoseError, ValueError):
    """An experiment configuration is invalid."""
