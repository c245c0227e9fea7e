"""Exception types shared across the package.

All input-validation failures derive from ValueError so callers can catch
broadly; runtime failures (divergence, tape misuse) derive from RuntimeError.
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class RankError(ValueError):
    """A scalar (rank-0) value was required but not supplied."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of the operation."""


class DegenerateRowError(DomainError):
    """A row with (near-)zero norm cannot be normalized."""


class ConfigError(ValueError):
    """Invalid configuration, hyperparameter, or argument combination."""


class ParseError(ValueError):
    """A data bundle file is missing, malformed, or inconsistent."""


class CapacityError(ValueError):
    """A request exceeds what the structure can supply (e.g. too many edges)."""


class MetricError(ValueError):
    """A metric is undefined for the given input (e.g. empty edge set)."""


class StateError(RuntimeError):
    """An operation was invoked in an invalid state (e.g. double backward)."""


class NumericError(RuntimeError):
    """Non-finite values or numerical divergence were encountered."""
