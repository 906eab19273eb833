"""Exception types shared across the package."""


class QVNetError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QVNetError, ValueError):
    """A configuration value is out of its valid range."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ShapeError(QVNetError, ValueError):
    """Array dimensions or lengths do not agree."""


class DomainError(QVNetError, ValueError):
    """An argument lies outside the domain of the operation."""


class TypeMismatchError(QVNetError, TypeError):
    """A base station of the wrong band was passed to a band-specific model."""


class StateError(QVNetError, ValueError):
    """A statevector is not normalized."""


class SizeError(QVNetError, ValueError):
    """Problem too large for dense simulation or exhaustive enumeration."""


class InfeasibleError(QVNetError, ValueError):
    """No assignment satisfies the capacity constraints."""


class NumericalError(QVNetError, ArithmeticError):
    """The objective returned a non-finite value."""

    def __init__(self, message: str, params=None):
        self.params = params
        super().__init__(message)
