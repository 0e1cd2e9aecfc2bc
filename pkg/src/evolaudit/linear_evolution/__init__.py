"""Linear evolution operator G(t,s): Monte Carlo and lattice backends plus audits."""

from .audits import (check_contraction, check_evolution_law_linear, check_gradient_estimate,
                     fit_gradient_constant, jensen_gap, richardson_error, sigma_for_gradient)
from .backends import WORKERS_ENV, FieldSample, Grid, MonteCarlo, worker_count
from .evolution import g_apply, g_apply_many, g_gradient, grid_solver, lattice_solution
from .grid import GridSolver, Lattice
from .montecarlo import simulate_terminal

__all__ = [
    "FieldSample", "Grid", "GridSolver", "Lattice", "MonteCarlo", "WORKERS_ENV",
    "check_contraction", "check_evolution_law_linear", "check_gradient_estimate", "fit_gradient_constant",
    "g_apply", "g_apply_many", "g_gradient", "grid_solver", "jensen_gap", "lattice_solution",
    "richardson_error", "sigma_for_gradient", "simulate_terminal", "worker_count",
]
