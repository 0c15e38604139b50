"""Exception hierarchy shared by all modules."""


class SigMMDError(Exception):
    """Base class for package errors."""


class InvalidInputError(SigMMDError, ValueError):
    """Input data violates an operation's preconditions."""


class InvalidParameterError(SigMMDError, ValueError):
    """A hyperparameter or configuration value is out of range."""


class DegenerateInputError(InvalidInputError):
    """Input has no variability where some is required."""


class NumericFault(SigMMDError, ArithmeticError):
    """A computation produced NaN or infinite values."""


class ConvergenceError(SigMMDError, RuntimeError):
    """An iterative estimator failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StateError(SigMMDError, RuntimeError):
    """An operation was invoked in the wrong order."""


class ConfigError(SigMMDError, ValueError):
    """Run configuration is inconsistent."""


class DataError(SigMMDError, ValueError):
    """Input file could not be parsed or failed validation."""
