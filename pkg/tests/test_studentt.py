import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from tseg.errors import DimMismatch, NotPositiveDefinite
from tseg.special import digamma
from tseg.studentt import (
    NU_MAX,
    ComponentParams,
    gaussian_log_pdf,
    kappa,
    log_pdf,
    log_pdf_from_dsq,
    mahalanobis_sq,
    nu_lhs,
    omega,
    solve_nu,
)


def test_mahalanobis_examples():
    c = ComponentParams(5, [1.0, -1.0], np.eye(2))
    assert mahalanobis_sq(c, [1.0, -1.0]) == 0
    assert mahalanobis_sq(c, [4.0, 3.0]) == pytest.approx(25, abs=1e-12)
    c = ComponentParams(5, [0.0, 0.0], np.diag([4.0, 1.0]))
    assert mahalanobis_sq(c, [2.0, 1.0]) == pytest.approx(2, abs=1e-12)
    with pytest.raises(DimMismatch):
        mahalanobis_sq(c, [1.0, 2.0, 3.0])


def test_cauchy_at_mode():
    c = ComponentParams(1, [0.0], [[1.0]])
    assert log_pdf(c, [0.0]) == pytest.approx(math.log(1 / math.pi), abs=1e-14)


def test_matches_scipy_multivariate_t(rng):
    a = rng.standard_normal((3, 3))
    sigma = a @ a.T + np.eye(3)
    mu = rng.standard_normal(3)
    x = rng.standard_normal((50, 3)) * 3
    for nu in (0.7, 3.0, 40.0):
        c = ComponentParams(nu, mu, sigma)
        ref = stats.multivariate_t(loc=mu, shape=sigma, df=nu).logpdf(x)
        assert np.allclose(log_pdf(c, x), ref, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_gaussian_limit(d, rng):
    a = rng.standard_normal((d, d))
    sigma = a @ a.T + 0.5 * np.eye(d)
    mu = rng.standard_normal(d)
    x = mu + rng.standard_normal((10_000, d)) * 2
    gap = np.abs(log_pdf(ComponentParams(1e8, mu, sigma), x) - gaussian_log_pdf(mu, sigma, x))
    assert gap.max() < 1e-4
    exact = ComponentParams(math.inf, mu, sigma)
    assert np.allclose(log_pdf(exact, x), gaussian_log_pdf(mu, sigma, x), rtol=1e-12)


def test_normalization_1d():
    c = ComponentParams(1.5, [0.3], [[2.0]])
    total, _ = integrate.quad(lambda t: math.exp(log_pdf(c, [t])), -np.inf, np.inf)
    assert total == pytest.approx(1, abs=1e-3)


def test_normalization_2d():
    c = ComponentParams(3, [0.0, 0.0], np.eye(2))
    # polar quadrature over the radial density; the tail beyond r = 1e4 is < 1e-7
    radial = lambda r: 2 * math.pi * r * math.exp(log_pdf_from_dsq(c, r * r))
    total = sum(integrate.quad(radial, a, b, limit=200)[0] for a, b in [(0, 10), (10, 1e4)])
    assert total == pytest.approx(1, abs=1e-3)


def test_log_pdf_strictly_decreasing_in_distance():
    c = ComponentParams(2.5, [0.0, 0.0], np.eye(2))
    vals = log_pdf_from_dsq(c, np.linspace(0, 100, 1001))
    assert np.all(np.diff(vals) < 0)


def test_omega_examples():
    c = ComponentParams(4, [0.0, 0.0], np.eye(2))
    assert omega(c, 0.0) == pytest.approx(6 / 4)
    assert omega(c, 4.0) == pytest.approx(0.75)
    assert 0 < omega(c, 1e300) < 1e-299
    assert np.all(omega(ComponentParams(math.inf, [0.0], [[1.0]]), np.array([0.0, 9.0])) == 1)


def test_kappa_cancellation_examples():
    c = ComponentParams(4, [0.0, 0.0], np.eye(2))
    h = 3.0
    expected = math.log(h) - digamma(h)
    # omega = 1 makes ln(w) - w = -1 for every sample
    assert kappa(c, [1.0], [1.0]) == pytest.approx(expected, abs=1e-14)
    assert kappa(c, [0.2, 0.5, 0.3], [1.0, 1.0, 1.0]) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize(
    "nu", [0.5, 4.0, 37.0, 1234.5]
)
def test_solve_nu_forward_oracle(nu):
    k = nu_lhs(nu)
    assert solve_nu(k) == pytest.approx(nu, rel=1e-9)


def test_solve_nu_examples():
    assert solve_nu(math.log(2) - digamma(2.0)) == pytest.approx(4, abs=1e-6)
    assert solve_nu(nu_lhs(0.5)) == pytest.approx(0.5, abs=1e-6)
    assert solve_nu(nu_lhs(NU_MAX)) == NU_MAX
    assert solve_nu(1e-9) == NU_MAX
    assert solve_nu(1e3) == 0.1


@given(st.floats(1e-5, 5))
def test_solve_nu_residual(k):
    nu = solve_nu(k)
    assert abs(nu_lhs(nu) - k) < 1e-10


@given(st.floats(math.log(0.5), math.log(1e4)))
def test_solve_nu_inverts_lhs(u):
    nu = math.exp(u)
    assert solve_nu(nu_lhs(nu)) == pytest.approx(nu, rel=1e-6)


def test_kappa_sampling_oracle():
    rng = np.random.default_rng(7)
    mu, sigma, nu = np.zeros(3), np.diag([1.0, 2.0, 0.5]), 5.0
    x = stats.multivariate_t(loc=mu, shape=sigma, df=nu).rvs(20_000, random_state=rng)
    c = ComponentParams(nu, mu, sigma)
    w = omega(c, mahalanobis_sq(c, x))
    est = solve_nu(kappa(c, np.ones(len(x)), w))
    assert 4 <= est <= 6.5


def test_near_singular_sigma_gets_jitter():
    c = ComponentParams(3, [0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]])
    assert np.all(np.isfinite(c.chol))
    assert c.sigma[0, 0] > 1.0


def test_indefinite_sigma_rejected():
    with pytest.raises(NotPositiveDefinite):
        ComponentParams(3, [0.0, 0.0], [[1.0, 0.0], [0.0, -5.0]])


def test_sigma_symmetrized_and_shape_checked():
    c = ComponentParams(3, [0.0, 0.0], [[2.0, 0.4], [0.0, 2.0]])
    assert np.array_equal(c.sigma, c.sigma.T)
    with pytest.raises(DimMismatch):
        ComponentParams(3, [0.0, 0.0], np.eye(3))
    with pytest.raises(ValueError):
        ComponentParams(0, [0.0], [[1.0]])
