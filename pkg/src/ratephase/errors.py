"""Exception hierarchy shared by all modules.

The CLI maps ``ConfigError`` to exit status 2 and ``DomainError`` (and its
subclasses) to exit status 3.
"""


class RatephaseError(Exception):
    pass


class ConfigError(RatephaseError):
    """Bad or missing configuration (wrong R, missing constants, bad flags)."""


class DomainError(RatephaseError, ValueError):
    """A parameter lies outside the region where a quantity is defined."""


class SizeError(DomainError):
    pass


class ShapeError(DomainError):
    pass


class QuantizationError(DomainError):
    pass


class DecodeError(DomainError):
    pass


class WaveletIndexError(DomainError, IndexError):
    pass


class OutOfCertificateError(DomainError):
    """A bound was requested outside the range where it is certified."""
