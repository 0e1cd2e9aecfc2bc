import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from evolaudit.benchmarks import benchmark
from evolaudit.errors import ArgumentError
from evolaudit.fields import library
from evolaudit.measures import (GaussianFlow, GaussianMeasure, MixingWarning, NuFunction, ParticleMeasure,
                                SeparableField, check_invariance, check_logsobolev, check_lsi_epsilon,
                                check_measure_derivative, check_tightness, dilated_exponentials,
                                estimate_logsobolev_constant, lp_norm, radius_for_mass)


def test_ou_family_is_standard_normal(ou_family):
    for t in (0.0, 2.5, 6.0):
        m, c = ou_family.moments(t)
        assert m[0] == pytest.approx(0.0, abs=1e-12)
        assert c[0, 0] == pytest.approx(1.0, abs=1e-10)


def test_forced_ou_mean_is_bounded_periodic_solution():
    # backward transport m' = m - sin t has the bounded solution (sin t + cos t)/2
    fam = benchmark("ou-forced").measure_family(0.0, 8.0)
    for t in np.linspace(0.0, 8.0, 17):
        m, c = fam.moments(t)
        assert m[0] == pytest.approx((math.sin(t) + math.cos(t)) / 2, abs=1e-8)
        assert c[0, 0] == pytest.approx(1.0, abs=1e-8)


def test_time_varying_ou_variance_against_quadrature():
    # Sigma' = 2(1 + sin(t)/2) Sigma - 2, bounded solution as an integral over the future
    fam = benchmark("ou-timevar").measure_family(0.0, 5.0)
    for t in (0.0, 1.3, 4.0):
        rate_int = lambda r: 2 * ((r - t) - 0.5 * (math.cos(r) - math.cos(t)))
        exact = 2 * integrate.quad(lambda r: math.exp(-rate_int(r)), t, t + 60, limit=200)[0]
        _, c = fam.moments(t)
        assert c[0, 0] == pytest.approx(exact, rel=1e-7)


def test_gauss_hermite_moments_are_exact():
    mu = GaussianMeasure(np.array([0.7]), np.array([[2.0]]))
    x = lambda p: p[:, 0]
    assert mu.integrate(x) == pytest.approx(0.7, abs=1e-12)
    assert mu.integrate(lambda p: (p[:, 0] - 0.7) ** 2) == pytest.approx(2.0, rel=1e-12)
    assert mu.integrate(lambda p: (p[:, 0] - 0.7) ** 4) == pytest.approx(12.0, rel=1e-12)
    assert mu.integrate(lambda p: np.cos(p[:, 0])) == pytest.approx(math.cos(0.7) * math.exp(-1.0), abs=1e-12)


def test_gaussian_rejects_singular_covariance():
    with pytest.raises(ArgumentError):
        GaussianMeasure(np.zeros(2), np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_ou_2d_covariance_is_stationary():
    bm = benchmark("ou-2d")
    fam = bm.measure_family(0.0, 2.0)
    _, cov = fam.moments(1.0)
    bmat, _ = bm.operator.linear_drift(1.0)
    q = bm.operator.Q(1.0, np.zeros((1, 2)))[0]
    # Lyapunov equation B S + S B^T + 2Q = 0 for the stationary covariance
    np.testing.assert_allclose(bmat @ cov + cov @ bmat.T + 2 * q, 0.0, atol=1e-8)


@pytest.mark.parametrize("name", ["ou", "ou-timevar"])
def test_invariance_gaussian_families(name, fields1d):
    bm = benchmark(name)
    fam = bm.measure_family(0.0, 4.0)
    for f in ("one", "sin", "tanh", "bump", "wave"):
        for s, t in ((0.0, 0.5), (0.5, 2.0), (1.0, 3.0)):
            rec = check_invariance(bm.operator, bm.grid, fam, t, s, fields1d[f])
            assert rec.passed, rec.to_dict()
            assert rec.lhs < 1e-3


def test_invariance_detects_wrong_family(fields1d):
    bm = benchmark("ou")
    wrong = GaussianFlow(benchmark("ou-forced").operator, 0.0, 4.0)
    rec = check_invariance(bm.operator, bm.grid, wrong, 2.0, 0.5, fields1d["sin"])
    assert not rec.passed


def test_measure_derivative_identity(ou_family, fields1d):
    fld = SeparableField(math.cos, lambda r: -math.sin(r), fields1d["wave"], "cos(r)*wave")
    rec = check_measure_derivative(benchmark("ou").operator, ou_family, fld, np.linspace(0.5, 5.0, 20))
    assert rec.passed
    assert rec.details["relative_error"] < 1e-3


def test_measure_derivative_time_varying(fields1d):
    bm = benchmark("ou-forced")
    fam = bm.measure_family(0.0, 6.0)
    fld = SeparableField(math.cos, lambda r: -math.sin(r), fields1d["x2"], "cos(r)*x2")
    rec = check_measure_derivative(bm.operator, fam, fld, np.linspace(0.5, 5.0, 20))
    assert rec.passed
    assert rec.details["relative_error"] < 1e-3


def test_logsobolev_constant_of_standard_normal(ou_family):
    # exponentials are extremal, so the witness reaches the sharp constant 1/2
    k = estimate_logsobolev_constant(ou_family, 1.0, dilated_exponentials(1), 2.0)
    assert k == pytest.approx(0.5, rel=1e-6)
    for f in dilated_exponentials(1):
        assert check_logsobolev(ou_family, 1.0, f, 2.0, 0.5 * (1 + 1e-6)).passed
        assert not check_logsobolev(ou_family, 1.0, f, 2.0, 0.4).passed


def test_logsobolev_rejects_q_at_most_one(ou_family, fields1d):
    with pytest.raises(ArgumentError):
        check_logsobolev(ou_family, 1.0, fields1d["sin"], 1.0, 0.5)


def test_lsi_epsilon_rational_nu(ou_family):
    nu = NuFunction("rational", 1.0, 1.0)
    assert nu(2.0) == 1.5
    f = dilated_exponentials(1, (0.5,))[0]
    assert check_lsi_epsilon(ou_family, 1.0, f, 2.0, [1.0, 2.0], nu).passed


def test_nu_table_is_step_function():
    nu = NuFunction("table", table=((1.0, 3.0), (2.0, 1.0)))
    assert nu(0.5) == math.inf
    assert nu(1.5) == 3.0
    assert nu(5.0) == 1.0
    with pytest.raises(ArgumentError):
        NuFunction("bogus")(1.0)


def test_tightness_and_radius(ou_family):
    rec = check_tightness(ou_family, [0.0, 1.0, 3.0], [1.0, 2.0, 3.0, 4.0])
    assert rec.passed
    # P(|Z| > 2) = 0.0455 and P(|Z| > 3) = 0.0027 for a standard normal
    assert rec.details["radius_for_eps"] == {"0.1": 2.0, "0.01": 3.0}
    assert radius_for_mass(ou_family, [0.0, 2.0], [1.0, 2.0, 3.0], 0.99) == 3.0
    assert radius_for_mass(ou_family, [0.0], [0.5], 0.99) is None


def test_lp_norm_standard_normal(ou_family, fields1d):
    assert lp_norm(ou_family, 1.0, fields1d["x"], 2.0) == pytest.approx(1.0, rel=1e-10)
    assert lp_norm(ou_family, 1.0, fields1d["x"], 4.0) == pytest.approx(3.0 ** 0.25, rel=1e-10)
    with pytest.raises(ArgumentError):
        lp_norm(ou_family, 1.0, fields1d["x"], 0.5)


def test_empirical_cubic_family_matches_gibbs_density():
    bm = benchmark("cubic")
    fam = bm.measure_family(0.0, 2.0, n_particles=20000)
    cloud = fam.at(1.0).points[:, 0]
    weight = lambda x: math.exp(-x * x / 2 - x**4 / 4)
    z = integrate.quad(weight, -np.inf, np.inf)[0]
    second = integrate.quad(lambda x: x * x * weight(x), -np.inf, np.inf)[0] / z
    se = float(np.std(cloud**2)) / math.sqrt(len(cloud))
    # Euler bias at dt = 1e-2 is of the order of the step
    assert abs(float(np.mean(cloud**2)) - second) < 4 * se + 1e-2


def test_empirical_family_invariance_with_sampling_error(fields1d):
    bm = benchmark("cubic")
    fam = bm.measure_family(0.0, 2.0)
    rec = check_invariance(bm.operator, bm.grid, fam, 1.0, 0.0, fields1d["bump"])
    assert rec.passed, rec.to_dict()


def test_short_pullback_warns():
    bm = benchmark("cubic")
    fam = bm.measure_family(0.0, 2.0, horizon=0.5)
    with pytest.warns(MixingWarning):
        fam.at(0.0)


def test_particle_measure_basics():
    mu = ParticleMeasure(np.array([[0.0], [1.0], [3.0], [-2.0]]))
    assert mu.weights.sum() == pytest.approx(1.0)
    assert mu.mass_outside(1.5) == 0.5
    with pytest.raises(ArgumentError):
        mu.logpdf(np.zeros((1, 1)))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(1.0, 4.0))
def test_lp_norm_increases_with_p(slope, p):
    fam = benchmark("ou").measure_family(0.0, 1.0)
    f = dilated_exponentials(1, (slope,))[0]
    assert lp_norm(fam, 0.5, f, p) <= lp_norm(fam, 0.5, f, p + 0.5) * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(0.2, 3.0))
def test_gaussian_mass_outside_is_decreasing(mean, radius):
    mu = GaussianMeasure(np.array([mean]), np.array([[1.5]]), nodes_per_axis=8)
    assert mu.mass_outside(radius + 0.1) <= mu.mass_outside(radius)
