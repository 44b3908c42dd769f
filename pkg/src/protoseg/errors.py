"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalAbort -> 4.
"""


class ProtosegError(Exception):
    """Base class for package errors."""


class ConfigError(ProtosegError):
    """Invalid configuration value, flag, or incompatible model dimensions."""


class DataError(ProtosegError):
    """Malformed or inconsistent input data (files, arrays, labels)."""


class NumericalAbort(ProtosegError):
    """Training produced a non-finite quantity and cannot continue."""
