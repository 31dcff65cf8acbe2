"""Exception types shared across the package."""


class SyntherError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SyntherError, ValueError):
    """Arguments violate a documented precondition."""


class InvalidStateError(SyntherError, RuntimeError):
    """Object is in the wrong state for the requested operation."""


class FormatError(SyntherError, ValueError):
    """A file failed to parse; message carries the byte offset when known."""


class InvalidDomainError(InvalidInputError):
    """A state lies outside an oracle's valid domain."""


class UnavailableDataError(SyntherError, RuntimeError):
    """A required buffer or dataset is empty."""


class UndefinedMetricError(SyntherError, ValueError):
    """A metric is undefined for the given inputs (e.g. all-constant data)."""


class NumericError(SyntherError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class ConfigError(SyntherError, ValueError):
    """Bad run configuration: unknown keys, missing files, schema mismatch."""
