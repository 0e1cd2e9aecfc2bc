"""Numerical audits of semilinear parabolic evolutions with unbounded coefficients.

The package realizes the linear evolution operator G(t,s) by Monte Carlo or a
Crank-Nicolson lattice, the tight family of measures mu_t, and the nonlinear
evolution N(t,s) through Picard iteration of the Duhamel formula, and checks
the associated estimates on benchmark operators.
"""

__version__ = "0.1.0"

from .audit import AuditRecord, dumps
from .benchmarks import benchmark, catalogue, problem
from .errors import (ArgumentError, ConfigError, DomainError, EllipticityError, EvaluationError, EvolAuditError,
                     WindowFailure)
from .linear_evolution import Grid, MonteCarlo, g_apply, g_gradient
from .operator_model import OperatorFamily
from .semilinear import MildSolution, Nonlinearity, evolve

__all__ = [
    "ArgumentError", "AuditRecord", "ConfigError", "DomainError", "EllipticityError", "EvaluationError",
    "EvolAuditError", "Grid", "MildSolution", "MonteCarlo", "Nonlinearity", "OperatorFamily", "WindowFailure",
    "__version__", "benchmark", "catalogue", "dumps", "evolve", "g_apply", "g_gradient", "problem",
]
