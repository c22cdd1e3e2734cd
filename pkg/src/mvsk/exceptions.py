"""Exception hierarchy for the MVSK solver."""


class MVSKError(Exception):
    """Base class for all errors raised by this package."""


class DataError(MVSKError, ValueError):
    """Problem data is malformed (non-finite entries, bad coefficients)."""


class ParseError(DataError):
    """A return file could not be parsed.

    ``row`` and ``column`` are 1-based locations in the source file when known.
    """

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class DimensionError(MVSKError, ValueError):
    """Array shapes or problem sizes are outside the supported range."""


class DomainError(MVSKError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractViolation(MVSKError, ValueError):
    """A caller broke a documented precondition (e.g. non-tangent direction)."""


class NumericError(MVSKError, ArithmeticError):
    """A kernel produced non-finite intermediate values."""


class StationaryPointError(MVSKError):
    """The reduced gradient vanished; no descent direction exists."""


class ConfigError(MVSKError, ValueError):
    """Solver configuration is inconsistent with the problem."""
