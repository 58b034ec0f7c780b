"""Rate-distortion phase transitions for mixed-norm sequence spaces.

Submodules: ``sequence`` (signals and norms), ``lp_geometry`` (l^p balls),
``critical`` (product measures and growth constants), ``codec`` (codecs),
``bounds`` (probability ceilings), ``wavelets`` (Besov coefficients),
``nn`` (quantized networks) and ``cli``.
"""

from .errors import (ConfigError, DecodeError, DomainError, OutOfCertificateError,
                     QuantizationError, RatephaseError, ShapeError, SizeError,
                     WaveletIndexError)
from .sequence import INF, PartitionSpec, Signal, SpaceSpec, make_dyadic_partition

__version__ = "0.1.0"

__all__ = [
    "INF", "PartitionSpec", "Signal", "SpaceSpec", "make_dyadic_partition",
    "ConfigError", "DecodeError", "DomainError", "OutOfCertificateError",
    "QuantizationError", "RatephaseError", "ShapeError", "SizeError", "WaveletIndexError",
]
