"""Shared fixtures: benchmark operators, measure families and cached solves."""

import math

import numpy as np
import pytest

from evolaudit.benchmarks import benchmark, problem
from evolaudit.fields import library
from evolaudit.semilinear import evolve


def ou_kernel_moments(x, tau):
    """Mean and variance of the OU transition law N(x e^{-tau}, 1 - e^{-2 tau})."""
    return np.asarray(x) * math.exp(-tau), -math.expm1(-2 * tau)


def ou_closed_form(name, x, tau):
    """Independent closed forms of G(t,s)f for the 1D OU benchmark."""
    m, v = ou_kernel_moments(x, tau)
    if name == "one":
        return np.ones_like(m)
    if name == "x":
        return m
    if name == "x2":
        return m**2 + v
    if name == "sin":
        return np.sin(m) * math.exp(-v / 2)
    raise KeyError(name)


@pytest.fixture(scope="session")
def ou():
    return benchmark("ou")


@pytest.fixture(scope="session")
def fields1d():
    return library(1)


@pytest.fixture(scope="session")
def ou_family(ou):
    return ou.measure_family(0.0, 6.0)


@pytest.fixture(scope="session")
def arctan_solution():
    pr = problem("ou-arctan")
    bm = pr.benchmark
    return evolve(bm.operator, bm.grid, pr.nonlinearity, 0.0, library(1)["sin"], 3.0)


@pytest.fixture(scope="session")
def damped_solution():
    pr = problem("ou-damped")
    bm = pr.benchmark
    return evolve(bm.operator, bm.grid, pr.nonlinearity, 0.0, library(1)["sin"], 5.0)
