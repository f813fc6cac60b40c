"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration problems exit with 2,
data problems with 3, solver/training failures with 4.
"""


class NnqfForecastError(Exception):
    """Base class for all package errors."""


class ConfigError(NnqfForecastError):
    """Invalid or inconsistent run configuration."""


class SchemaError(NnqfForecastError):
    """A referenced column or channel does not exist."""


class ParseError(NnqfForecastError):
    """A cell could not be parsed; carries the offending row index."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class TimestampGridError(NnqfForecastError):
    """Timestamps are not strictly increasing and equidistant."""


class InsufficientDataError(NnqfForecastError):
    """Too few timesteps for the requested embedding or task window."""


class DimensionError(NnqfForecastError):
    """Mismatched array lengths or feature counts."""


class ContractError(NnqfForecastError):
    """An internal precondition was violated (debug-level check)."""


class DomainError(NnqfForecastError):
    """A scalar argument lies outside its mathematical domain."""


class EmptySampleError(NnqfForecastError):
    """A metric was requested on an empty (filtered) sample."""


class FormatError(NnqfForecastError):
    """A persisted artifact has the wrong format, version or kind tag."""


class SolverError(NnqfForecastError):
    """The LP/QP solver failed (infeasible, unbounded, or iteration cap)."""


class TrainingDivergedError(NnqfForecastError):
    """Network training produced a non-finite loss; carries the epoch."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


DATA_ERRORS = (
    SchemaError,
    ParseError,
    TimestampGridError,
    InsufficientDataError,
    DimensionError,
    EmptySampleError,
    FormatError,
    DomainError,
)

SOLVER_ERRORS = (SolverError, TrainingDivergedError)
