"""Exception types shared across the package."""


class SymgroundError(Exception):
    """Base class for package errors."""


class UnsatisfiableError(SymgroundError):
    """A symbolic constraint admits no solution where one was required."""


class NumericalFault(SymgroundError):
    """A perception model produced a non-finite log-probability."""


class ConfigError(SymgroundError):
    """A run configuration is malformed or inconsistent."""
