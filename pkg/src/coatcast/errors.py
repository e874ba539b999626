"""Exception hierarchy shared across the package."""


class CoatcastError(Exception):
    """Base class for all package errors."""


class IngestError(CoatcastError):
    """Raised for malformed or empty input files."""


class SchemaError(CoatcastError):
    """Raised when a column mapping references an unknown channel."""


class DomainError(CoatcastError):
    """Raised when an operation's precondition on its inputs is violated."""


class FitError(CoatcastError):
    """Raised when a model fit cannot be carried out (degenerate input, bad init)."""


class CalibrationError(CoatcastError):
    """Raised when threshold calibration has no usable grid point."""


class StatsError(CoatcastError):
    """Raised when a summary statistic is undefined (e.g. CV with zero mean)."""


class InitError(CoatcastError):
    """Raised when parameter initialization has too little data."""


class LikelihoodError(CoatcastError):
    """Zero intensity at an observed event: log-likelihood is -inf.

    The offending value is carried in ``value`` so callers that treat -inf
    as a valid (terrible) objective can recover it.
    """

    def __init__(self, msg, value=float("-inf")):
        super().__init__(msg)
        self.value = value


class SampleError(CoatcastError):
    """Raised when trajectory sampling encounters a non-finite intensity."""


class ConfigError(CoatcastError):
    """Raised for invalid pipeline configuration."""
