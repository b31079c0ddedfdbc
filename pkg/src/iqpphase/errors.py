"""Exception hierarchy shared by all modules."""


class IQPError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(IQPError, ValueError):
    """Arguments violate a documented precondition."""


class DomainError(IQPError, ValueError):
    """Input lies outside the mathematical domain of an operation (e.g. log of zero)."""


class ResourceError(IQPError, MemoryError):
    """Requested problem size exceeds the configured memory budget."""


class NumericalError(IQPError, ArithmeticError):
    """A numerical procedure failed (singular solve, non-finite values)."""
