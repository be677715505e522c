"""Exception hierarchy shared by every module.

Each class carries the process exit code the command line maps it to.
"""


class QKLError(Exception):
    exit_code = 1


class UsageError(QKLError, ValueError):
    """Bad arguments: wrong shapes, out-of-range indices, empty inputs."""

    exit_code = 2


class ConfigurationError(UsageError):
    """Invalid or internally inconsistent configuration values."""


class DataError(QKLError):
    """Unreadable or malformed input data (audio, manifests, cache files)."""

    exit_code = 3


class NumericError(QKLError, ArithmeticError):
    """Numerical breakdown: indefinite Gram matrices, undefined cosines."""

    exit_code = 4
