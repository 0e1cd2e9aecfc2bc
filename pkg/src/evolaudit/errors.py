"""Exception hierarchy shared by every module."""

from __future__ import annotations


class EvolAuditError(Exception):
    """Base class for library errors."""


class ArgumentError(EvolAuditError, ValueError):
    """Invalid argument combination (empty sample set, t <= s, q <= p, ...)."""


class DomainError(EvolAuditError, ValueError):
    """Time outside the operator's time interval."""


class EvaluationError(EvolAuditError, ArithmeticError):
    """A coefficient evaluator returned non-finite values."""

    def __init__(self, message: str, t=None, x=None):
        super().__init__(f"{message} at t={t!r}, x={x!r}")
        self.t = t
        self.x = x


class EllipticityError(EvolAuditError, ArithmeticError):
    """Diffusion matrix failed to be positive definite at a visited state."""

    def __init__(self, message: str, t=None, x=None):
        super().__init__(f"{message} at t={t!r}, x={x!r}")
        self.t = t
        self.x = x


class WindowFailure(EvolAuditError, RuntimeError):
    """Picard iteration did not converge on a time window even after bisection."""

    def __init__(self, message: str, start: float, end: float, trace: list):
        super().__init__(f"{message} on [{start}, {end}]")
        self.start = start
        self.end = end
        self.trace = trace


class ConfigError(EvolAuditError, ValueError):
    """Malformed or inconsistent run configuration."""
