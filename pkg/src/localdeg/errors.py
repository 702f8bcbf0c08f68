"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, IoError -> 3,
UndefinedMetricError -> 4. Everything else is a plain crash (exit 1).
"""


class LocaldegError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(LocaldegError):
    """Invalid or inconsistent configuration."""


class IoError(LocaldegError):
    """Missing or malformed files on disk."""


class UndefinedMetricError(LocaldegError):
    """A metric was requested on inputs where it has no defined value."""


class DimensionError(LocaldegError):
    """Array shapes do not match an operation's contract."""


class InputError(LocaldegError):
    """A signal or index argument violates an operation's precondition."""


class ContractViolationError(LocaldegError):
    """An internal invariant was broken (e.g. non-scalar loss, non-unit rows)."""
