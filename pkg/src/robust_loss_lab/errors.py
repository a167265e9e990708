"""Shared exception types.

Everything here derives from ValueError so callers that do not care about
the distinctions can catch one base class.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad spec string, out-of-range parameter, incompatible shapes."""


class CsvParseError(ValueError):
    """Malformed dataset or matrix CSV; the message names the offending line."""


class DegenerateProblemError(ValueError):
    """A construction that needs non-degeneracy hit a singular / vanishing quantity."""


class DivergenceError(RuntimeError):
    """The optimizer encountered a non-finite objective or gradient at an iterate."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
