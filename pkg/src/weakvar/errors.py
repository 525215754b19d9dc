"""Exception and warning types raised across the package."""


class WeakVarError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WeakVarError, ValueError):
    """Invalid parameters, grids or configuration documents."""


class DomainTooSmallError(WeakVarError):
    """The wavefunction does not decay before the grid boundary."""


class DegenerateStateError(WeakVarError):
    """Every grid point is masked as a node."""


class NodeUndefinedError(WeakVarError):
    """Conditioning on a position where the density vanishes."""


class RangeError(WeakVarError, ValueError):
    """A requested shift or window leaves the grid support."""


class ParseError(WeakVarError, ValueError):
    """Malformed input file. ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedOracleError(WeakVarError):
    """No closed form exists for the requested (model, quantity) pair."""


class InstabilityError(WeakVarError):
    """Time evolution lost unitarity or violated a step-size bound."""


class AmbiguousPhaseWarning(UserWarning):
    """Adjacent phase samples differ by exactly pi."""


class FitDegradedWarning(UserWarning):
    """Least-squares fit with a large condition number."""
