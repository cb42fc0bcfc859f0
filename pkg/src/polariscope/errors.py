class PolariscopeError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PolariscopeError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class GeometryError(DomainError):
    """The atomic orientation is not one the requested formula supports."""


class ConfigError(PolariscopeError, ValueError):
    """A species or experiment file failed to parse or validate."""


class ConsistencyError(PolariscopeError, RuntimeError):
    """Two independent routes to the same quantity disagree."""
