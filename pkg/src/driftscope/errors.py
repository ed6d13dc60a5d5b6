"""Exception types shared across the package."""


class DriftscopeError(Exception):
    """Base class for all driftscope errors."""


class ConfigurationError(DriftscopeError):
    """Unknown flow id or invalid configuration value."""


class FormatError(DriftscopeError):
    """File does not follow the expected binary layout (magic/version)."""


class CorruptionError(DriftscopeError):
    """File layout recognized but record counts are inconsistent."""


class ValidationError(DriftscopeError):
    """Data violates a structural invariant (times, shapes, finiteness)."""


class ConnectivityError(DriftscopeError):
    """Kernel graph leaves particles unreachable.

    Raised both for orphan particles (rows with no surviving kernel entry)
    and for multi-component spectra (second eigenvalue equal to one).
    """

    def __init__(self, message, orphans=None):
        super().__init__(message)
        self.orphans = list(orphans) if orphans is not None else []


class DegenerateNeighborhoodError(DriftscopeError):
    """Spatial neighborhood too small to form a covariance."""
