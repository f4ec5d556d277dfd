"""Exception types raised across the package."""


class VineLoadError(Exception):
    """Base class for all package errors."""


class CapacityError(VineLoadError, MemoryError):
    """Requested register is wider than the configured qubit cap."""


class InvalidGateError(VineLoadError, ValueError):
    pass


class LengthMismatchError(VineLoadError, ValueError):
    pass


class UndefinedTauError(VineLoadError, ValueError):
    """Kendall's tau is undefined because an input vector is constant."""


class StructureInvalidError(VineLoadError, ValueError):
    pass


class NonFiniteLossError(VineLoadError, FloatingPointError):
    pass


class DataError(VineLoadError, ValueError):
    """Malformed input data (CSV rows, prices, covariance)."""
