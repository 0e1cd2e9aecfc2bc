import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import ou_closed_form
from evolaudit.benchmarks import benchmark
from evolaudit.errors import ArgumentError
from evolaudit.fields import library, numeric, sine
from evolaudit.linear_evolution import (Grid, MonteCarlo, check_contraction, check_evolution_law_linear,
                                        check_gradient_estimate, fit_gradient_constant, g_apply, g_gradient,
                                        jensen_gap, richardson_error, simulate_terminal)

POINTS = np.linspace(-3, 3, 9)


@pytest.mark.parametrize("name", ["one", "x", "x2", "sin"])
@pytest.mark.parametrize("tau", [0.1, math.log(2), 2.0])
def test_grid_matches_ou_kernel(ou, fields1d, name, tau):
    got = g_apply(ou.operator, ou.grid, tau, 0.0, fields1d[name], POINTS).values
    np.testing.assert_allclose(got, ou_closed_form(name, POINTS, tau), atol=1e-4)


def test_time_varying_ou_against_integrated_rate(fields1d):
    bm = benchmark("ou-timevar")
    s, t = 0.3, 1.5
    # u = m(t) x^2 + c(t) solves D_t u = u'' + a(t) x u' with m' = 2 a m, c' = 2 m
    # for a(t) = -(1 + sin(t)/2), so c(t) = 2 int_s^t exp(2 int_s^r a) dr
    A = lambda lo, hi: -(hi - lo) + 0.5 * (math.cos(hi) - math.cos(lo))
    r = np.linspace(s, t, 4001)
    integrand = np.exp(2 * np.array([A(s, ri) for ri in r]))
    var = 2 * float(np.sum((integrand[1:] + integrand[:-1]) / 2 * np.diff(r)))
    mean = POINTS * math.exp(A(s, t))
    got = g_apply(bm.operator, bm.grid, t, s, fields1d["x2"], POINTS).values
    np.testing.assert_allclose(got, mean**2 + var, atol=1e-4)


def test_forced_ou_both_backends_follow_the_equation(fields1d):
    bm = benchmark("ou-forced")
    s, t = 0.3, 1.8
    # u = a(t) x + c(t) solves D_t u = u'' + (-x + sin t) u' with a' = -a, c' = a sin t
    shift = integrate.quad(lambda r: math.exp(-(r - s)) * math.sin(r), s, t)[0]
    exact = POINTS * math.exp(-(t - s)) + shift
    # the forward-in-r path law would give int_s^t e^{-(t-r)} sin r dr instead
    wrong = integrate.quad(lambda r: math.exp(-(t - r)) * math.sin(r), s, t)[0]
    assert abs(shift - wrong) > 0.1
    grid = g_apply(bm.operator, bm.grid, t, s, fields1d["x"], POINTS).values
    np.testing.assert_allclose(grid, exact, atol=1e-4)
    mc = g_apply(bm.operator, MonteCarlo(n_paths=20000, dt=1e-2, seed=3), t, s, fields1d["x"], POINTS)
    assert np.mean(np.abs(mc.values - exact) <= 3 * mc.std_errors + 5e-3) >= 0.85


def test_montecarlo_within_standard_errors(ou, fields1d):
    mc = MonteCarlo(n_paths=20000, dt=1e-2, seed=11)
    sample = g_apply(ou.operator, mc, 1.0, 0.0, fields1d["sin"], POINTS)
    exact = ou_closed_form("sin", POINTS, 1.0)
    # Euler bias at dt = 1e-2 is far below the sampling error here
    assert np.mean(np.abs(sample.values - exact) <= 3 * sample.std_errors) >= 0.85


def test_montecarlo_deterministic_across_workers(ou):
    pts = np.linspace(-1, 1, 5).reshape(-1, 1)
    one = simulate_terminal(ou.operator, MonteCarlo(n_paths=3000, dt=1e-2, seed=5, block=512, workers=1),
                            0.5, 0.0, pts)
    many = simulate_terminal(ou.operator, MonteCarlo(n_paths=3000, dt=1e-2, seed=5, block=512, workers=8),
                             0.5, 0.0, pts)
    assert np.array_equal(one, many)
    other = simulate_terminal(ou.operator, MonteCarlo(n_paths=3000, dt=1e-2, seed=6, block=512), 0.5, 0.0, pts)
    assert not np.array_equal(one, other)


@pytest.mark.parametrize("name", ["ou", "ou-forced", "cubic", "ou-varq"])
def test_contraction_bounded_fields(name, fields1d):
    bm = benchmark(name)
    for f in ("sin", "bump", "wave"):
        rec = check_contraction(bm.operator, bm.grid, 1.0, 0.0, fields1d[f], POINTS)
        assert rec.passed, rec.to_dict()


def test_contraction_unbounded_needs_box(ou, fields1d):
    with pytest.raises(ArgumentError):
        check_contraction(ou.operator, ou.grid, 1.0, 0.0, fields1d["x"], POINTS)
    rec = check_contraction(ou.operator, ou.grid, 1.0, 0.0, fields1d["x"], POINTS, box=4.0)
    assert rec.details["box_relative"]


def test_gradient_estimate_has_teeth(ou, fields1d):
    good = check_gradient_estimate(ou.operator, ou.dissipativity, ou.grid, 2.0, 0.5, 0.0, fields1d["sin"], POINTS,
                                   sigma_p=-1.0)
    assert good.passed
    assert good.details["max_lhs_over_rhs"] >= 0.1
    bad = check_gradient_estimate(ou.operator, ou.dissipativity, ou.grid, 2.0, 0.5, 0.0, fields1d["sin"], POINTS,
                                  sigma_p=-1.3)
    assert not bad.passed


def test_gradient_of_ou_solution(ou, fields1d):
    grad = g_gradient(ou.operator, ou.grid, 1.0, 0.0, fields1d["sin"], POINTS)
    m, v = POINTS * math.exp(-1.0), -math.expm1(-2.0)
    expected = math.exp(-1.0) * np.cos(m) * math.exp(-v / 2)
    np.testing.assert_allclose(grad.gradient_values[:, 0], expected, atol=1e-4)


def test_evolution_law_linear_grid_and_montecarlo(ou, fields1d):
    rec = check_evolution_law_linear(ou.operator, ou.grid, 0.0, 0.4, 1.0, fields1d["sin"], POINTS)
    assert rec.passed
    mc = MonteCarlo(n_paths=4000, dt=1e-2, seed=3)
    rec = check_evolution_law_linear(ou.operator, mc, 0.0, 0.4, 1.0, fields1d["sin"], np.array([-1.0, 0.0, 1.0]))
    assert rec.passed, rec.to_dict()
    with pytest.raises(ArgumentError):
        check_evolution_law_linear(ou.operator, ou.grid, 0.0, 1.0, 1.0, fields1d["sin"], POINTS)


def test_richardson_error_is_small_and_bounds_true_error(ou, fields1d):
    err = richardson_error(ou.operator, ou.grid, 1.0, 0.0, fields1d["sin"], POINTS)
    true = np.abs(g_apply(ou.operator, ou.grid, 1.0, 0.0, fields1d["sin"], POINTS).values
                  - ou_closed_form("sin", POINTS, 1.0))
    assert np.max(err) < 1e-4
    assert np.max(true) <= 3 * np.max(err) + 1e-9


def test_fit_gradient_constant(ou, fields1d):
    fit = fit_gradient_constant(ou.operator, ou.grid, 0.0, [0.1, 0.5, 1.0], [fields1d["sin"], fields1d["bump"]],
                                POINTS)
    assert 0 < fit["C0"] < 1.0


def test_times_must_increase(ou, fields1d):
    with pytest.raises(ArgumentError):
        g_apply(ou.operator, ou.grid, 0.0, 1.0, fields1d["sin"], POINTS)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0.05, 2.0))
def test_grid_contraction_on_trig_polynomials(coeffs, tau):
    ou = benchmark("ou")
    grid = Grid(radius=8.0, n_cells=128, dt=1e-2)

    def f(x):
        return sum(c * np.sin((k + 1) * x[:, 0]) for k, c in enumerate(coeffs))

    mesh = np.linspace(-8, 8, 4001).reshape(-1, 1)
    sup = float(np.max(np.abs(f(mesh))))
    rec = check_contraction(ou.operator, grid, tau, 0.0, numeric(f), POINTS, sup_norm=sup)
    assert rec.passed


@settings(max_examples=15, deadline=None)
@given(st.floats(1.0, 4.0), st.floats(0.1, 2.0))
def test_jensen_gap_is_nonnegative(p, tau):
    ou = benchmark("ou")
    gap = jensen_gap(ou.operator, Grid(radius=8.0, n_cells=128, dt=1e-2), tau, 0.0, sine(), p, POINTS)
    assert np.all(gap >= -1e-6)
