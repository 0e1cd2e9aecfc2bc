import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evolaudit.benchmarks import benchmark, operator_names
from evolaudit.errors import ArgumentError, DomainError, EvaluationError
from evolaudit.fields import exp_quadratic, one_plus_square, sine
from evolaudit.operator_model import (DissipativityData, EllipticityCertificate, LyapunovCertificate,
                                      OperatorFamily, apply_operator, compute_sigma_p, jacobi_eigenvalues,
                                      sample_box, verify_hypotheses)


def _ou(kappa=1.0):
    return OperatorFamily(1, lambda t, x: np.full((len(x), 1, 1), kappa), lambda t, x: -x, name="ou-test",
                          constant_diffusion=True)


@pytest.mark.parametrize("name", operator_names())
def test_catalogue_certificates_hold(name):
    bm = benchmark(name)
    samples = sample_box(bm.operator.dimension, 0.0, 3.0, 4.0, n_t=5, n_x=21)
    report = verify_hypotheses(bm.operator, bm.ellipticity, bm.lyapunov, bm.dissipativity, samples)
    assert report.passed, report.failures()


def test_too_large_kappa0_is_reported():
    bm = benchmark("ou")
    samples = sample_box(1, 0.0, 1.0, 3.0, n_t=3, n_x=11)
    report = verify_hypotheses(bm.operator, EllipticityCertificate(1.5), bm.lyapunov, bm.dissipativity, samples)
    assert report.failures() == ["ellipticity"]
    assert report.entry("ellipticity").worst_slack == pytest.approx(-0.5)


def test_wrong_lyapunov_constants_are_reported():
    bm = benchmark("ou")
    samples = sample_box(1, 0.0, 1.0, 3.0, n_t=3, n_x=11)
    # A(1 + x^2) = 2 - 2x^2 = 4 - 2(1 + x^2): a = 1 is too small
    report = verify_hypotheses(bm.operator, bm.ellipticity, LyapunovCertificate(one_plus_square(1), 1.0, 2.0),
                               bm.dissipativity, samples)
    assert "lyapunov" in report.failures()
    report = verify_hypotheses(bm.operator, bm.ellipticity, LyapunovCertificate(one_plus_square(1), 4.0, 2.0),
                               bm.dissipativity, samples)
    assert report.passed


def test_apply_operator_on_closed_form():
    op = _ou()
    x = np.linspace(-3, 3, 13).reshape(-1, 1)
    # A sin = -sin - x cos
    expected = -np.sin(x[:, 0]) - x[:, 0] * np.cos(x[:, 0])
    np.testing.assert_allclose(apply_operator(op, 0.0, sine(), x), expected, atol=1e-12)
    # A e^{x^2/4} = (1/2 + x^2/4 - x^2/2) e^{x^2/4}
    phi = exp_quadratic(0.25)
    expected = (0.5 + x[:, 0] ** 2 / 4 - x[:, 0] ** 2 / 2) * np.exp(x[:, 0] ** 2 / 4)
    np.testing.assert_allclose(apply_operator(op, 0.0, phi, x), expected, rtol=1e-10)


def test_domain_and_evaluation_errors():
    op = OperatorFamily(1, lambda t, x: np.full((len(x), 1, 1), 1.0), lambda t, x: -x, t_min=0.0)
    with pytest.raises(DomainError):
        op.check_time(-1.0)
    bad = OperatorFamily(1, lambda t, x: np.full((len(x), 1, 1), np.nan), lambda t, x: -x)
    with pytest.raises(EvaluationError):
        bad.Q(0.0, [[0.0]])
    asym = OperatorFamily(2, lambda t, x: np.broadcast_to(np.array([[1.0, 0.2], [0.1, 1.0]]), (len(x), 2, 2)),
                          lambda t, x: -x)
    with pytest.raises(EvaluationError):
        asym.Q(0.0, np.zeros((1, 2)))


def test_sigma_p_guard_and_value():
    bm = benchmark("ou")
    samples = sample_box(1, 0.0, 1.0, 3.0, n_t=3, n_x=11)
    assert compute_sigma_p(bm.operator, bm.dissipativity, 2.0, samples).value == pytest.approx(-1.0)
    with pytest.raises(ArgumentError):
        compute_sigma_p(bm.operator, DissipativityData(lambda t: 0.0, p0=2.0), 1.5, samples)


def test_finite_difference_jacobian_matches_analytic():
    bm = benchmark("cubic")
    op = bm.operator
    plain = OperatorFamily(1, op.diffusion, op.drift)
    x = np.linspace(-2, 2, 9).reshape(-1, 1)
    np.testing.assert_allclose(plain.drift_jac(0.0, x), op.drift_jac(0.0, x), rtol=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(0.05, 3.0))
def test_jacobi_eigenvalues_match_lapack(entries, shift):
    a, b, c = entries
    m = np.array([[a, b], [b, c]]) + shift * np.eye(2)
    ours = jacobi_eigenvalues(m[None])[0]
    np.testing.assert_allclose(ours, np.linalg.eigvalsh(m), atol=1e-10 * (1 + np.abs(m).max()))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-3.0, 3.0))
def test_evaluators_are_pure(t, x):
    op = benchmark("ou-varq").operator
    pts = np.array([[x]])
    assert np.array_equal(op.Q(t, pts), op.Q(t, pts))
    assert np.array_equal(op.b(t, pts), op.b(t, pts))
