"""Exception hierarchy shared across the package."""


class SpanSentError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SpanSentError, ValueError):
    """Tensor dimensions do not line up; message carries both shapes."""


class ContractError(SpanSentError, ValueError):
    """An argument violates a documented precondition."""


class DataError(SpanSentError, ValueError):
    """A dataset, lexicon or fixture file is malformed or inconsistent."""


class NotFoundError(SpanSentError, KeyError):
    """A keyed lookup (sentence id, teacher entry, distance pair) is missing."""


class ConfigError(SpanSentError, ValueError):
    """Bad command-line flag or config-file entry."""


class NumericError(SpanSentError, ArithmeticError):
    """A non-finite value appeared where training cannot continue."""


class MissingGradientError(SpanSentError, RuntimeError):
    """An optimizer step found a parameter whose gradient was never populated."""
