"""Irreducible-tensor model of dispersive polarimetric probing of alkali atoms."""

from polariscope.errors import (
    ConfigError,
    ConsistencyError,
    DomainError,
    GeometryError,
    PolariscopeError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConsistencyError",
    "DomainError",
    "GeometryError",
    "PolariscopeError",
    "__version__",
]
