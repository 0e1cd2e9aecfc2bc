import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evolaudit.benchmarks import benchmark, problem
from evolaudit.errors import ArgumentError, WindowFailure
from evolaudit.fields import library
from evolaudit.linear_evolution import Grid, MonteCarlo, g_apply
from evolaudit.semilinear import (Nonlinearity, arctan_damping, check_continuity_in_data, check_duhamel_bound,
                                  check_evolution_law, check_local_estimates, check_lp_estimates,
                                  check_nonlinearity_certificates, check_pde_residual, check_picard, damped_arctan,
                                  duhamel_term, evolve, evolve_lp, fit_lp_constants, linear_nonlinearity,
                                  lp_constant, lp_requirements, mollified_data, picard_window, uniqueness_gap,
                                  zero_nonlinearity)

SMALL = Grid(radius=8.0, n_cells=128, dt=4e-3)


def test_zero_nonlinearity_is_the_linear_evolution_bitwise(ou, fields1d):
    sol = evolve(ou.operator, ou.grid, zero_nonlinearity(), 0.0, fields1d["sin"], 1.5)
    assert sol.linear_mode
    assert len(sol.windows) == 1 and sol.windows[0].iterations == 1
    direct = g_apply(ou.operator, ou.grid, 1.5, 0.0, fields1d["sin"], sol.lattice.nodes).values
    assert np.array_equal(sol.values[-1], direct)


def test_linear_psi_matches_closed_form(ou, fields1d):
    # psi = -u with f = x gives u = x e^{-2(t - s)}
    sol = evolve(ou.operator, ou.grid, linear_nonlinearity(-1.0), 0.0, fields1d["x"], 2.0)
    assert len(sol.windows) == 2
    pts = np.linspace(-3, 3, 13)
    for t in np.linspace(0.0, 2.0, 9):
        np.testing.assert_allclose(sol.evaluate(t, pts), pts * math.exp(-2 * t), atol=1e-3)


def test_linear_psi_gradient_matches_closed_form(ou, fields1d):
    sol = evolve(ou.operator, ou.grid, linear_nonlinearity(-0.5), 0.0, fields1d["sin"], 1.0)
    pts = np.linspace(-2, 2, 9)
    m, v = pts * math.exp(-1.0), -math.expm1(-2.0)
    expected = math.exp(-0.5) * math.exp(-1.0) * np.cos(m) * math.exp(-v / 2)
    np.testing.assert_allclose(sol.evaluate_gradient(1.0, pts)[:, 0], expected, atol=1e-3)


def test_picard_on_arctan(arctan_solution):
    rec = check_picard(arctan_solution, 0.55, 15)
    assert rec.passed, rec.to_dict()
    assert all(w.max_ratio <= 0.55 for w in arctan_solution.windows)


def test_picard_check_fails_on_tight_iteration_budget(arctan_solution):
    assert not check_picard(arctan_solution, 0.55, 2).passed


def test_uniqueness_from_two_initial_iterates(ou, fields1d):
    nl = arctan_damping()
    a = evolve(ou.operator, ou.grid, nl, 0.0, fields1d["sin"], 2.0, initial="linear")
    b = evolve(ou.operator, ou.grid, nl, 0.0, fields1d["sin"], 2.0, initial="zero")
    assert uniqueness_gap(a, b) < 2 * a.tol_fix
    # the linear start saves sweeps
    assert sum(w.iterations for w in a.windows) <= sum(w.iterations for w in b.windows)


def test_initial_datum_is_reproduced(arctan_solution, fields1d):
    lat = arctan_solution.lattice
    np.testing.assert_array_equal(arctan_solution.values[0], fields1d["sin"](lat.nodes))


def test_stalling_iteration_raises_window_failure(ou, fields1d):
    explosive = Nonlinearity(lambda t, x, u, v: 60.0 * u, 60.0, xi1=60.0, name="60u")
    with pytest.raises(WindowFailure) as info:
        evolve(ou.operator, SMALL, explosive, 0.0, fields1d["sin"], 1.0)
    assert len(info.value.trace) == 5
    assert info.value.start == 0.0


def test_picard_window_single(ou, fields1d):
    sol = picard_window(ou.operator, ou.grid, arctan_damping(), 0.0, fields1d["sin"], 0.5)
    assert sol.end == pytest.approx(0.5)
    with pytest.raises(ArgumentError):
        picard_window(ou.operator, ou.grid, arctan_damping(), 0.0, fields1d["sin"], 0.0)


def test_evolve_needs_increasing_times(ou, fields1d):
    with pytest.raises(ArgumentError):
        evolve(ou.operator, ou.grid, arctan_damping(), 1.0, fields1d["sin"], 1.0)


def test_evolve_on_montecarlo_backend(ou, fields1d):
    mc = MonteCarlo(n_paths=1000, dt=5e-2, seed=1)
    sol = evolve(ou.operator, mc, linear_nonlinearity(-1.0), 0.0, fields1d["x"], 0.5)
    pts = np.linspace(-2, 2, 5)
    np.testing.assert_allclose(sol.evaluate(0.5, pts), pts * math.exp(-1.0), atol=0.1)


def test_certificates_accept_and_reject():
    rec, nl = check_nonlinearity_certificates(damped_arctan(), 1)
    assert rec.passed and nl.certificates_checked
    wrong = Nonlinearity(lambda t, x, u, v: -np.arctan(u), 1.0, xi1=-0.5, name="overclaimed")
    rec, nl = check_nonlinearity_certificates(wrong, 1)
    assert not rec.passed and not nl.certificates_checked
    assert rec.details["failing_part"] == "sign"
    steep = Nonlinearity(lambda t, x, u, v: -3 * np.arctan(u), 1.0, name="steep")
    assert check_nonlinearity_certificates(steep, 1)[0].details["failing_part"] == "lipschitz"


def test_nonlinearity_parameter_guards():
    with pytest.raises(ArgumentError):
        Nonlinearity(lambda t, x, u, v: u, 1.0, beta=1.0)
    with pytest.raises(ArgumentError):
        Nonlinearity(lambda t, x, u, v: u, 1.0, xi0=-1.0)


def test_duhamel_constant_source(ou):
    z = duhamel_term(ou.operator, SMALL, 0.0, 1.2, lambda r, x: np.ones(len(x)), np.array([-1.0, 0.0, 2.0]))
    np.testing.assert_allclose(z.values, 1.2, atol=1e-9)


def test_duhamel_singular_source(ou):
    # integral of (r - s)^{-1/2} over (s, t) is 2 sqrt(t - s); the graded rule is exact for it
    src = lambda r, x: np.full(len(x), r ** -0.5)
    z = duhamel_term(ou.operator, SMALL, 0.0, 1.0, src, np.array([0.0]), gamma_sing=0.5)
    assert z.values[0] == pytest.approx(2.0, rel=1e-9)
    rec = check_duhamel_bound(z, 0.0, 1.0, 0.5, 1.0)
    assert rec.passed
    assert not check_duhamel_bound(z, 0.0, 1.0, 0.5, 0.9).passed
    with pytest.raises(ArgumentError):
        duhamel_term(ou.operator, SMALL, 0.0, 1.0, src, np.array([0.0]), gamma_sing=1.0)


def test_local_estimates(ou, fields1d, arctan_solution):
    other = evolve(ou.operator, ou.grid, arctan_damping(), 0.0, fields1d["sin-perturbed"], 3.0)
    rec = check_local_estimates(arctan_solution, other, C0=0.6, box=4.0)
    assert rec.passed, rec.to_dict()


def test_evolution_law_on_arctan(ou, fields1d):
    rec = check_evolution_law(ou.operator, SMALL, arctan_damping(), fields1d["sin"], 0.0, 0.7, 1.5)
    assert rec.passed, rec.to_dict()
    with pytest.raises(ArgumentError):
        check_evolution_law(ou.operator, SMALL, arctan_damping(), fields1d["sin"], 0.0, 2.0, 1.5)


def test_pde_residual_second_order(ou, fields1d):
    nl = arctan_damping()
    sols = [evolve(ou.operator, Grid(radius=8.0, n_cells=128 * 2**k, dt=4e-3 / 2**k), nl, 0.0, fields1d["sin"], 1.2)
            for k in range(3)]
    rec = check_pde_residual(sols, ou.operator, nl, [0.5, 1.0])
    assert rec.passed, rec.to_dict()
    assert min(rec.details["observed_orders"]) >= 1.7


def test_continuity_in_data(ou, fields1d):
    base = fields1d["sin"]
    seq = [lambda x, n=n: np.sin(x[:, 0]) + np.sin(n * x[:, 0]) / n for n in (1, 2, 4, 8, 16)]
    rec = check_continuity_in_data(ou.operator, SMALL, arctan_damping(), seq, base, 0.0, 1.0, (-2.0, 2.0))
    assert rec.passed, rec.to_dict()


def test_lp_constants_fit_and_validate(ou, ou_family, fields1d):
    nl = arctan_damping()
    f = evolve(ou.operator, SMALL, nl, 0.0, fields1d["sin"], 3.0)
    g = evolve(ou.operator, SMALL, nl, 0.0, fields1d["sin-perturbed"], 3.0)
    req = lp_requirements(f, g, ou_family, 2.0, [0.5, 1.0, 2.0, 3.0])
    d1, d2 = fit_lp_constants([0.5, 1.0, 2.0, 3.0], req)
    assert all(lp_constant(t, d1, d2) >= r for t, r in zip([0.5, 1.0, 2.0, 3.0], req))
    assert check_lp_estimates(f, g, ou_family, 2.0, d1, d2, ends=[0.75, 1.5, 2.5]).passed


def test_mollified_data_is_bounded_and_converges(ou):
    lat = evolve(ou.operator, SMALL, zero_nonlinearity(), 0.0, library(1)["one"], 0.1).lattice
    rough = lambda x: np.sign(x[:, 0]) * np.maximum(np.abs(x[:, 0]), 1e-12) ** -0.25
    levels = [mollified_data(rough, lat, n) for n in (2, 4, 8)]
    for n, v in zip((2, 4, 8), levels):
        assert np.max(np.abs(v)) <= n
    sols = evolve_lp(ou.operator, SMALL, arctan_damping(), 0.0, rough, 0.5, levels=(2, 4, 8))
    gaps = [np.max(np.abs(sols[k].values[-1] - sols[-1].values[-1])) for k in range(2)]
    assert gaps[1] < gaps[0]


def test_solution_writes_manifest(tmp_path, arctan_solution):
    manifest = arctan_solution.write(tmp_path / "sol", [0.0, 1.5, 3.0], meta={"problem": "ou-arctan"})
    assert len(list((tmp_path / "sol").glob("u_*.csv"))) == 3
    on_disk = json.loads((tmp_path / "sol" / "manifest.json").read_text())
    assert on_disk["problem"] == "ou-arctan" and on_disk["linear_mode"] is False
    assert on_disk["files"] == manifest["files"]
    first = (tmp_path / "sol" / "u_0000.csv").read_text().splitlines()
    assert first[0] == "x0,u,grad0"
    assert len(first) == 1 + arctan_solution.lattice.size


def test_solution_rejects_times_outside(arctan_solution):
    with pytest.raises(ArgumentError):
        arctan_solution.at(3.5)


def test_problem_catalogue_has_certified_nonlinearities():
    for name in ("ou-arctan", "ou-damped", "ou-gradient", "ou-source"):
        pr = problem(name)
        rec, _ = check_nonlinearity_certificates(pr.nonlinearity, pr.benchmark.operator.dimension, n=4000)
        assert rec.passed, name


@settings(max_examples=6, deadline=None)
@given(st.floats(-1.5, 0.5), st.floats(0.2, 1.5))
def test_linear_psi_scales_the_linear_evolution(xi, tau):
    ou = benchmark("ou")
    f = library(1)["sin"]
    sol = evolve(ou.operator, SMALL, linear_nonlinearity(xi), 0.0, f, tau)
    lin = evolve(ou.operator, SMALL, zero_nonlinearity(), 0.0, f, tau)
    mask = sol.lattice.box_mask(4.0)
    # the coupling error is exactly second order in dt and first order in xi;
    # a refinement study over xi in [-1.5, 0.5], tau <= 1.5 gave gap <= 0.66 |xi| dt^2
    bound = abs(xi) * math.exp(abs(xi) * tau) * SMALL.dt**2 + 1e-8
    gap = np.max(np.abs(sol.values[-1][mask] - math.exp(xi * tau) * lin.values[-1][mask]))
    assert gap <= bound


@settings(max_examples=6, deadline=None)
@given(st.floats(0.2, 2.0))
def test_arctan_damping_shrinks_sup_norm(amplitude):
    ou = benchmark("ou")
    f = lambda x: amplitude * np.sin(x[:, 0])
    sol = evolve(ou.operator, SMALL, arctan_damping(), 0.0, f, 1.0)
    sups = np.max(np.abs(sol.values), axis=1)
    assert np.all(np.diff(sups) <= 1e-9)
