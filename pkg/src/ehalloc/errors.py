"""Exception types shared across the package."""


class EhallocError(Exception):
    """Base class for package errors."""


class ValidationError(EhallocError, ValueError):
    """Malformed or inconsistent input (bad file, mismatched shapes, ...)."""


class DomainError(EhallocError, ValueError):
    """Numeric argument outside the mathematical domain of an operation."""


class InfeasibleAllocationError(EhallocError, ValueError):
    """An energy spend that the battery cannot support."""


class ExtrapolationError(EhallocError, ValueError):
    """A state fell outside the hull of a solved grid."""


class StateCapExceeded(EhallocError, ValueError):
    """A brute-force search would exceed its configured state budget."""
