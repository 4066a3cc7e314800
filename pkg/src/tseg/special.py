"""Digamma and trigamma for positive real arguments.

Both use upward recurrence until the argument reaches ``_ASYMPTOTIC_MIN``
and then the Bernoulli-number asymptotic series, which at that point is
accurate to well below 1e-13.  All functions accept scalars or arrays.
"""
import numpy as np

from .errors import DomainError

_ASYMPTOTIC_MIN = 10.0

# B_{2j} / (2j) for j = 1..8: the coefficients of x^{-2j} in ln(x) - psi(x) - 1/(2x)
_LOG_MINUS_PSI = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
)

# B_{2j} for j = 1..8: coefficients of x^{-(2j+1)} in psi'(x) - 1/x - 1/(2x^2)
_TRIGAMMA = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)


def _check(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("argument must be > 0")
    return x


def _series(coeffs, inv_x2):
    # Horner in 1/x^2 for sum_j c_j x^{-2j}
    acc = np.zeros_like(inv_x2)
    for c in reversed(coeffs):
        acc = (acc + c) * inv_x2
    return acc


def _shift(x):
    """Return ``(x + n, sum_{i<n} 1/(x+i), sum_{i<n} 1/(x+i)^2)`` with ``x + n >= 10``."""
    x = np.array(x, dtype=float, copy=True)
    s1 = np.zeros_like(x)
    s2 = np.zeros_like(x)
    small = x < _ASYMPTOTIC_MIN
    while np.any(small):
        xs = x[small]
        s1[small] += 1.0 / xs
        s2[small] += 1.0 / (xs * xs)
        x[small] = xs + 1.0
        small = x < _ASYMPTOTIC_MIN
    return x, s1, s2


def _out(val, like):
    return float(val) if np.ndim(like) == 0 else val


def digamma(x):
    """psi(x) = d/dx ln Gamma(x) for x > 0."""
    x0 = _check(x)
    z, s1, _ = _shift(x0)
    val = np.log(z) - 0.5 / z - _series(_LOG_MINUS_PSI, 1.0 / (z * z)) - s1
    return _out(val, x)


def trigamma(x):
    """psi'(x) for x > 0."""
    x0 = _check(x)
    z, _, s2 = _shift(x0)
    inv = 1.0 / z
    val = inv + 0.5 * inv * inv + inv * _series(_TRIGAMMA, inv * inv) + s2
    return _out(val, x)


def log_minus_digamma(x):
    """ln(x) - psi(x), computed without cancellation for large x.

    This is strictly decreasing from +inf to 0 on (0, inf).
    """
    x0 = _check(x)
    z, s1, _ = _shift(x0)
    tail = 0.5 / z + _series(_LOG_MINUS_PSI, 1.0 / (z * z))
    # ln x - psi(x) = [ln z - psi(z)] - ln(z / x) + sum 1/(x+i)
    val = tail - np.log(z / x0) + s1
    return _out(val, x)


def x_trigamma_minus_one(x):
    """x * psi'(x) - 1, which tends to 1/(2x) for large x (positive everywhere)."""
    x0 = _check(x)
    big = x0 >= _ASYMPTOTIC_MIN
    val = np.empty_like(x0)
    if np.any(big):
        xb = x0[big]
        inv = 1.0 / xb
        # x * (1/x + 1/(2x^2) + sum B_2j x^{-(2j+1)}) - 1
        val[big] = 0.5 * inv + _series(_TRIGAMMA, inv * inv)
    if np.any(~big):
        xs = x0[~big]
        val[~big] = xs * trigamma(xs) - 1.0
    return _out(val, x)
