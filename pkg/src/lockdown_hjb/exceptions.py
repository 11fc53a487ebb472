"""Exception hierarchy shared by every module."""


class LockdownHJBError(Exception):
    """Base class for errors raised by this package."""


class DomainError(LockdownHJBError, ValueError):
    """An input lies outside the state triangle or the admissible control range."""


class StepSizeError(LockdownHJBError, ArithmeticError):
    """A numerical step left the invariant set by more than the clamping tolerance."""


class ConvergenceError(LockdownHJBError, RuntimeError):
    """The fixed-point iteration did not reach its tolerance."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class UndefinedThresholdError(DomainError):
    """Lockdown thresholds requested where the costate gap q - p vanishes."""


class ConfigError(LockdownHJBError, ValueError):
    """Malformed or inconsistent configuration."""
