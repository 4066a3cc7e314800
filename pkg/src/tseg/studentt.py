"""Multivariate Student-t numerics used by the mixture EM.

A component with ``nu = inf`` is the Gaussian limit: its density is the
normal density and its EM weights are identically one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .errors import DimMismatch, EmptyComponent, NotPositiveDefinite
from .special import digamma, log_minus_digamma, x_trigamma_minus_one

NU_MIN = 0.1
NU_MAX = 1e6
NU_INIT = 10.0
_JITTER_TRIES = 3


def _cholesky_with_jitter(sigma):
    d = sigma.shape[0]
    jitter = 1e-6 * np.trace(sigma) / d
    if not jitter > 0:
        jitter = 1e-6
    for attempt in range(_JITTER_TRIES + 1):
        try:
            return sigma, np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            if attempt == _JITTER_TRIES:
                break
            sigma = sigma + jitter * np.eye(d)
    raise NotPositiveDefinite("scale matrix is not positive definite after jitter")


@dataclass(frozen=True, eq=False)
class ComponentParams:
    """One mixture component ``(nu, mu, sigma)``.

    ``sigma`` is symmetrized on construction; if its Cholesky factorization
    fails, ``1e-6 * trace / D`` is added to the diagonal (up to three times).
    The factor ``chol`` and the log normalizer ``log_norm`` are cached.
    """

    nu: float
    mu: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray = None
    log_norm: float = None

    def __post_init__(self):
        nu = float(self.nu)
        if not nu > 0:
            raise ValueError(f"degrees of freedom must be positive, got {nu}")
        mu = np.array(self.mu, dtype=float, ndmin=1)
        sigma = np.array(self.sigma, dtype=float, ndmin=2)
        d = mu.shape[0]
        if sigma.shape != (d, d):
            raise DimMismatch(f"sigma of shape {sigma.shape} does not match mean of dim {d}")
        sigma = 0.5 * (sigma + sigma.T)
        sigma, chol = _cholesky_with_jitter(sigma)
        half_logdet = float(np.log(np.diag(chol)).sum())
        if math.isinf(nu):
            log_norm = -0.5 * d * math.log(2 * math.pi) - half_logdet
        else:
            log_norm = (
                gammaln(0.5 * (d + nu))
                - gammaln(0.5 * nu)
                - 0.5 * d * math.log(nu * math.pi)
                - half_logdet
            )
        for a in (mu, sigma, chol):
            a.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "log_norm", float(log_norm))

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def is_gaussian(self) -> bool:
        return math.isinf(self.nu)

    def replace(self, **changes) -> "ComponentParams":
        kw = dict(nu=self.nu, mu=self.mu, sigma=self.sigma)
        kw.update(changes)
        return ComponentParams(**kw)


def mahalanobis_sq(c: ComponentParams, x) -> np.ndarray | float:
    """Squared Mahalanobis distance of ``x`` (``(D,)`` or ``(N, D)``) from ``c.mu``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    if xs.shape[1] != c.dim:
        raise DimMismatch(f"expected dim {c.dim}, got {xs.shape[1]}")
    z = solve_triangular(c.chol, (xs - c.mu).T, lower=True, check_finite=False)
    d2 = np.einsum("ij,ij->j", z, z)
    return float(d2[0]) if single else d2


def log_pdf_from_dsq(c: ComponentParams, d_sq):
    if c.is_gaussian:
        return c.log_norm - 0.5 * d_sq
    return c.log_norm - 0.5 * (c.nu + c.dim) * np.log1p(d_sq / c.nu)


def log_pdf(c: ComponentParams, x):
    """Log-density of the multivariate Student-t at ``x``.

    Uses the standard normalizer
    ``lnG((D+nu)/2) - lnG(nu/2) - (D/2) ln(nu pi) - (1/2) ln|Sigma|``.
    """
    return log_pdf_from_dsq(c, mahalanobis_sq(c, x))


def gaussian_log_pdf(mu, sigma, x):
    """Normal log-density; an independent reference for the large-nu limit."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = mu.shape[0]
    diff = x - mu
    sol = np.linalg.solve(sigma, diff.T).T
    _, logdet = np.linalg.slogdet(sigma)
    return -0.5 * (d * math.log(2 * math.pi) + logdet + np.einsum("ij,ij->i", diff, sol))


def omega(c: ComponentParams, d_sq):
    """EM weight ``(nu + D) / (nu + d_sq)``; identically one in the Gaussian limit."""
    if c.is_gaussian:
        return np.ones_like(np.asarray(d_sq, dtype=float))
    return (c.nu + c.dim) / (c.nu + np.asarray(d_sq, dtype=float))


def kappa(c: ComponentParams, tau_col, omega_vals) -> float:
    """Right-hand side of the degrees-of-freedom equation for one component."""
    tau_col = np.asarray(tau_col, dtype=float)
    omega_vals = np.asarray(omega_vals, dtype=float)
    mass = tau_col.sum()
    if mass < 1e-12:
        raise EmptyComponent(-1, mass)
    half = 0.5 * (c.nu + c.dim)
    weighted = np.dot(tau_col, np.log(omega_vals) - omega_vals) / mass
    # ln(h) - psi(h) - 1 - mean(ln w - w); written to avoid cancellation at large nu
    return float(log_minus_digamma(half) - 1.0 - weighted)


def nu_lhs(nu):
    """``ln(nu/2) - psi(nu/2)``, strictly decreasing in ``nu``."""
    return log_minus_digamma(0.5 * np.asarray(nu, dtype=float))


def solve_nu(kappa_val: float, nu_min: float = NU_MIN, nu_max: float = NU_MAX,
             tol: float = 1e-13, max_iter: int = 100) -> float:
    """Solve ``ln(nu/2) - psi(nu/2) = kappa_val`` for ``nu``, clamped to [nu_min, nu_max].

    Newton iterations in ``u = ln(nu)``, safeguarded by a shrinking bracket
    (bisection whenever a Newton step leaves it).
    """
    k = float(kappa_val)
    if k >= nu_lhs(nu_min):
        return nu_min
    if k <= nu_lhs(nu_max):
        return nu_max
    lo, hi = math.log(nu_min), math.log(nu_max)
    # lhs ~ 1/nu + 1/(3 nu^2) for large nu, ~ 2/nu for small nu
    u = math.log(min(max(1.0 / k, nu_min), nu_max))
    for _ in range(max_iter):
        nu = math.exp(u)
        f = nu_lhs(nu) - k
        if abs(f) < tol * max(1.0, k):
            return nu
        # f decreasing in u: f > 0 means the root is at larger nu
        if f > 0:
            lo = u
        else:
            hi = u
        # d/du [ln(nu/2) - psi(nu/2)] = 1 - (nu/2) psi'(nu/2)
        fprime = -x_trigamma_minus_one(0.5 * nu)
        step = u - f / fprime
        u = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15:
            break
    return math.exp(u)
