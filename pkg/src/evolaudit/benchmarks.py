"""Catalogue of operators and semilinear problems with their certificates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ArgumentError
from .fields import exp_quadratic, one_plus_square
from .linear_evolution import Grid, MonteCarlo
from .measures import EmpiricalFamily, GaussianFlow
from .operator_model import (DissipativityData, EllipticityCertificate, LyapunovCertificate, OperatorFamily)
from .semilinear import (Nonlinearity, arctan_damping, damped_arctan, forced_arctan, gradient_coupled,
                         linear_nonlinearity)


@dataclass(frozen=True)
class Benchmark:
    """An operator family bundled with the certificates its audits rely on.

    ``sigma1`` is the p = 1 gradient exponent (sup of r), defined when the
    diffusion does not depend on x. ``lsi_constant`` is a known admissible K
    for the log-Sobolev inequality of the tight family, if one is known.
    """

    name: str
    description: str
    operator: OperatorFamily
    ellipticity: EllipticityCertificate
    lyapunov: LyapunovCertificate
    dissipativity: DissipativityData
    measure_kind: str = "gaussian"
    grid: Grid = field(default_factory=Grid)
    sigma1: Optional[float] = None
    relaxation_rate: float = -1.0
    lsi_constant: Optional[float] = None

    @property
    def kappa0(self) -> float:
        return self.ellipticity.kappa0

    def measure_family(self, t_lo: float = 0.0, t_hi: float = 10.0, horizon: Optional[float] = None,
                       mc: Optional[MonteCarlo] = None, n_particles: int = 4000):
        if self.measure_kind == "gaussian":
            return GaussianFlow(self.operator, t_lo, t_hi, horizon=40.0 if horizon is None else horizon)
        mc = mc or MonteCarlo(n_paths=n_particles, dt=1e-2, seed=0)
        h = 5.0 / abs(self.relaxation_rate) if horizon is None else horizon
        return EmpiricalFamily(self.operator, mc, horizon=h, n_particles=n_particles,
                               relaxation_rate=self.relaxation_rate)


@dataclass(frozen=True)
class Problem:
    """A benchmark operator together with a nonlinearity and a default datum."""

    name: str
    benchmark: Benchmark
    nonlinearity: Nonlinearity
    description: str = ""
    default_datum: str = "sin"


def _scalar(value: float):
    return lambda t, x: np.full((len(x), 1, 1), value)


def _linear_1d(rate: Callable[[float], float], forcing: Callable[[float], float] = lambda t: 0.0):
    def drift(t, x):
        return rate(t) * x + forcing(t)

    def jac(t, x):
        return np.full((len(x), 1, 1), rate(t))

    def lin(t):
        return np.array([[rate(t)]]), np.array([forcing(t)])

    return drift, jac, lin


def ornstein_uhlenbeck() -> Benchmark:
    drift, jac, lin = _linear_1d(lambda t: -1.0)
    op = OperatorFamily(1, _scalar(1.0), drift, name="ou", drift_jacobian=jac, constant_diffusion=True,
                        autonomous=True, linear_drift=lin)
    return Benchmark("ou", "1D Ornstein-Uhlenbeck: Q = 1, b = -x", op, EllipticityCertificate(1.0),
                     LyapunovCertificate(exp_quadratic(0.25), 0.75, 0.25), DissipativityData(lambda t: 0.0),
                     sigma1=-1.0, lsi_constant=0.5)


def time_varying_ou() -> Benchmark:
    rate = lambda t: -(1.0 + 0.5 * np.sin(t))
    drift, jac, lin = _linear_1d(rate)
    op = OperatorFamily(1, _scalar(1.0), drift, name="ou-timevar", drift_jacobian=jac, constant_diffusion=True,
                        linear_drift=lin)
    return Benchmark("ou-timevar", "1D OU with b = -(1 + sin(t)/2) x", op, EllipticityCertificate(1.0),
                     LyapunovCertificate(exp_quadratic(0.125), 0.375, 0.125),
                     DissipativityData(lambda t: 0.0, r_bound=lambda t, x: np.full(len(x), -0.5)),
                     sigma1=-0.5, relaxation_rate=-0.5)


def forced_ou() -> Benchmark:
    drift, jac, lin = _linear_1d(lambda t: -1.0, np.sin)
    op = OperatorFamily(1, _scalar(1.0), drift, name="ou-forced", drift_jacobian=jac, constant_diffusion=True,
                        linear_drift=lin)
    return Benchmark("ou-forced", "1D OU with periodic forcing: b = -x + sin t", op, EllipticityCertificate(1.0),
                     LyapunovCertificate(exp_quadratic(0.25), 2.0, 0.125), DissipativityData(lambda t: 0.0),
                     sigma1=-1.0, lsi_constant=0.5)


OU2_Q = np.array([[1.0, 0.3], [0.3, 0.8]])
OU2_B = np.array([[-1.0, 0.5], [-0.5, -1.2]])


def ou_2d() -> Benchmark:
    op = OperatorFamily(2, lambda t, x: np.broadcast_to(OU2_Q, (len(x), 2, 2)).copy(), lambda t, x: x @ OU2_B.T,
                        name="ou-2d", drift_jacobian=lambda t, x: np.broadcast_to(OU2_B, (len(x), 2, 2)).copy(),
                        constant_diffusion=True, autonomous=True, linear_drift=lambda t: (OU2_B, np.zeros(2)))
    return Benchmark("ou-2d", "2D OU with correlated diffusion and rotational drift", op,
                     EllipticityCertificate(0.5), LyapunovCertificate(one_plus_square(2), 6.0, 2.0),
                     DissipativityData(lambda t: 0.0), grid=Grid(radius=6.0, n_cells=96, dt=1e-2), sigma1=-1.0)


def ou_variable_diffusion() -> Benchmark:
    def diffusion(t, x):
        return (1.0 + 0.25 * np.sin(x[:, 0])).reshape(-1, 1, 1)

    def diffusion_jac(t, x):
        return (0.25 * np.cos(x[:, 0])).reshape(-1, 1, 1, 1)

    drift, jac, _ = _linear_1d(lambda t: -1.0)
    op = OperatorFamily(1, diffusion, drift, name="ou-varq", diffusion_jacobian=diffusion_jac,
                        drift_jacobian=jac, autonomous=True)
    return Benchmark("ou-varq", "1D drift -x with diffusion 1 + sin(x)/4", op, EllipticityCertificate(0.75),
                     LyapunovCertificate(exp_quadratic(0.125), 0.5, 0.125), DissipativityData(lambda t: 1.0 / 3.0),
                     measure_kind="empirical")


def cubic() -> Benchmark:
    op = OperatorFamily(1, _scalar(1.0), lambda t, x: -x - x**3, name="cubic",
                        drift_jacobian=lambda t, x: (-1.0 - 3.0 * x**2).reshape(-1, 1, 1),
                        constant_diffusion=True, autonomous=True)
    return Benchmark("cubic", "1D gradient drift -x - x^3 (ultrabounded)", op, EllipticityCertificate(1.0),
                     LyapunovCertificate(exp_quadratic(0.25), 1.0, 0.25), DissipativityData(lambda t: 0.0),
                     measure_kind="empirical", grid=Grid(radius=4.0, n_cells=512, dt=1e-3), sigma1=-1.0,
                     lsi_constant=0.5)


_OPERATORS = {
    "ou": ornstein_uhlenbeck,
    "ou-timevar": time_varying_ou,
    "ou-forced": forced_ou,
    "ou-2d": ou_2d,
    "ou-varq": ou_variable_diffusion,
    "cubic": cubic,
}

_PROBLEMS = {
    "ou-arctan": ("ou", arctan_damping, "OU with psi = -arctan(u)"),
    "ou-damped": ("ou", damped_arctan, "OU with psi = -u - arctan(u)"),
    "ou-linear": ("ou", lambda: linear_nonlinearity(-1.0), "OU with psi = -u"),
    "ou-gradient": ("ou", gradient_coupled, "OU with psi = -arctan(u) + 0.1 tanh(u_x)"),
    "ou-source": ("ou", forced_arctan, "OU with psi = -arctan(u) + 0.1 sin(t)/(1 + x^2)"),
    "cubic-arctan": ("cubic", arctan_damping, "cubic drift with psi = -arctan(u)"),
    "timevar-arctan": ("ou-timevar", arctan_damping, "time-varying OU with psi = -arctan(u)"),
}

_CACHE: dict = {}


def benchmark(name: str) -> Benchmark:
    if name not in _OPERATORS:
        raise ArgumentError(f"unknown benchmark {name!r}; known: {sorted(_OPERATORS)}")
    if name not in _CACHE:
        _CACHE[name] = _OPERATORS[name]()
    return _CACHE[name]


def problem(name: str) -> Problem:
    if name in _OPERATORS:
        from .semilinear import zero_nonlinearity
        return Problem(name, benchmark(name), zero_nonlinearity(), "linear problem on " + name)
    if name not in _PROBLEMS:
        raise ArgumentError(f"unknown problem {name!r}; known: {sorted(_PROBLEMS) + sorted(_OPERATORS)}")
    op_name, make, text = _PROBLEMS[name]
    return Problem(name, benchmark(op_name), make(), text)


def operator_names() -> list:
    return list(_OPERATORS)


def problem_names() -> list:
    return list(_PROBLEMS)


def catalogue() -> list:
    """(name, kind, description) rows for listing."""
    rows = [(n, "operator", benchmark(n).description) for n in _OPERATORS]
    rows += [(n, "problem", _PROBLEMS[n][2]) for n in _PROBLEMS]
    return rows
