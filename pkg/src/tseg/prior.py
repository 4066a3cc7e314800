"""Spatial Dirichlet prior on the per-pixel mixing probabilities.

The location field is the Gaussian-smoothed responsibility field and the
scale field its normalized local variance.  The prior update then blends
each pixel's responsibilities with its neighbourhood location, weighted by
the local scale:

    p = (s^2 * tau + m) / (s^2 + 1)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .core import Lattice, ProbabilityField


@dataclass(frozen=True, eq=False)
class SmoothingKernel:
    """Truncated, normalized sampled Gaussian of width ``sigma`` (pixels).

    ``taps`` is the 1D separable kernel of radius ``ceil(3 sigma)``;
    ``self_corr0`` is the sum of squared 2D kernel entries, i.e. the
    autocorrelation ``G*G`` at zero lag.
    """

    sigma: float
    taps: np.ndarray = field(init=False)
    self_corr0: float = field(init=False)

    def __post_init__(self):
        sigma = float(self.sigma)
        if not sigma > 0:
            raise ValueError("kernel width must be positive")
        radius = max(1, math.ceil(3 * sigma))
        x = np.arange(-radius, radius + 1, dtype=float)
        taps = np.exp(-0.5 * (x / sigma) ** 2)
        taps /= taps.sum()
        taps.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "self_corr0", float(np.sum(taps**2) ** 2))

    @property
    def radius(self) -> int:
        return (self.taps.size - 1) // 2

    def dense(self) -> np.ndarray:
        """The full 2D kernel (outer product of the taps)."""
        return np.outer(self.taps, self.taps)


@dataclass(frozen=True, eq=False)
class PriorState:
    location: ProbabilityField
    scale_sq: np.ndarray
    p: ProbabilityField


def _smooth_axis(a, taps, axis):
    out = correlate1d(a, taps, axis=axis, mode="constant", cval=0.0)
    ones = np.ones(a.shape[axis])
    mass = correlate1d(ones, taps, mode="constant", cval=0.0)
    shape = [1] * a.ndim
    shape[axis] = -1
    return out / mass.reshape(shape)


def smooth_field(g: SmoothingKernel, field) -> np.ndarray:
    """Convolve an ``(H, W)`` or ``(H, W, C)`` field with ``g``.

    Pixels near the border use only the kernel mass that falls inside the
    image, rescaled to one, so constant fields are preserved everywhere.
    """
    a = np.asarray(field, dtype=float)
    a = _smooth_axis(a, g.taps, 0)
    return _smooth_axis(a, g.taps, 1)


def location_field(g: SmoothingKernel, tau: ProbabilityField) -> ProbabilityField:
    m = smooth_field(g, tau.image())
    return ProbabilityField(tau.lattice, m.reshape(tau.lattice.size, tau.k))


def scale_field(g: SmoothingKernel, tau: ProbabilityField, m: ProbabilityField) -> np.ndarray:
    """Per-pixel squared scale ``s^2`` (flat, length N), clamped at zero."""
    sq = smooth_field(g, tau.image() ** 2).reshape(tau.lattice.size, tau.k)
    var = (sq - m.data**2).sum(axis=1)
    s2 = var / (tau.k * (1.0 - g.self_corr0))
    return np.maximum(s2, 0.0)


def prior_update(tau: ProbabilityField, m: ProbabilityField, s_sq) -> ProbabilityField:
    s_sq = np.asarray(s_sq, dtype=float).reshape(-1, 1)
    p = (s_sq * tau.data + m.data) / (s_sq + 1.0)
    return ProbabilityField(tau.lattice, p)


def update_prior(g: SmoothingKernel, tau: ProbabilityField) -> PriorState:
    """Location, scale and updated mixing probabilities from one responsibility field."""
    m = location_field(g, tau)
    s2 = scale_field(g, tau, m)
    return PriorState(m, s2, prior_update(tau, m, s2))


def uniform_prior(lattice: Lattice, k: int) -> PriorState:
    u = ProbabilityField.uniform(lattice, k)
    return PriorState(u, np.zeros(lattice.size), u)
