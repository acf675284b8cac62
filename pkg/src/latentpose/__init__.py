"""Structured 3D human pose regression through an overcomplete auto-encoder latent space.

Modules: ``numerics`` (layers, gradients, ADAM), ``autoencoder``,
``regressor`` (CNN, decoder stacking, baselines), ``synthdata``
(synthetic skeleton dataset), ``eval`` (metrics and reports) and ``cli``.
"""

from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    FormatError,
    LatentPoseError,
    ParameterError,
    RangeError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionError",
    "DomainError",
    "FormatError",
    "LatentPoseError",
    "ParameterError",
    "RangeError",
    "__version__",
]
