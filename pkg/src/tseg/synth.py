"""Synthetic validation images with known prior probability fields.

Ground-truth mixing fields are built from K Gaussian bumps at random,
well separated centers, passed through a softmax; the temperature controls
how decisive the per-pixel probabilities are.  Pixel labels are drawn from
those probabilities and feature vectors from the labelled component's
Student-t distribution.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import softmax

from .core import FeatureField, LabelMap, Lattice, ProbabilityField
from .errors import KMismatch
from .studentt import ComponentParams

Uncertainty = Literal["low", "high"]

# softmax temperatures applied to bumps of unit height
TEMPERATURE = {"low": 0.02, "high": 0.2}
# kernel widths used to fit each regime
FIT_SIGMA = {"low": 5.25, "high": 10.25}


def default_components() -> list[ComponentParams]:
    """Three well separated 3-channel components with distinct tails."""
    return [
        ComponentParams(3.0, [20.0, 0.0, 0.0], [[9.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 4.0]]),
        ComponentParams(6.0, [0.0, 20.0, 0.0], np.diag([4.0, 9.0, 4.0])),
        ComponentParams(15.0, [0.0, 0.0, 20.0], [[4.0, 0.0, 1.0], [0.0, 4.0, 0.0], [1.0, 0.0, 12.0]]),
    ]


@dataclass(frozen=True, eq=False)
class SynthSpec:
    lattice: Lattice = Lattice(128, 128)
    k: int = 3
    components: list = field(default_factory=default_components)
    uncertainty: Uncertainty = "low"
    seed: int = 0
    # bump width, as a fraction of the short image side
    field_scale: float = 0.5
    # minimum distance between bump centers (fraction of the short side, for K = 3)
    min_separation: float = 0.45
    temperature: float | None = None

    def __post_init__(self):
        if len(self.components) != self.k:
            raise KMismatch(f"{len(self.components)} components for k={self.k}")
        if any(c.dim != 3 for c in self.components):
            raise ValueError("synthetic components live in a 3-channel color space")
        if self.uncertainty not in TEMPERATURE:
            raise ValueError(f"unknown uncertainty level {self.uncertainty!r}")

    @property
    def fit_sigma(self) -> float:
        return FIT_SIGMA[self.uncertainty]


def _bump_centers(spec, rng, max_tries=1000):
    h, w = spec.lattice.shape
    sep = spec.min_separation * min(h, w) * np.sqrt(3.0 / spec.k)
    while True:
        for _ in range(max_tries):
            c = rng.uniform(0.1, 0.9, size=(spec.k, 2)) * [h, w]
            gaps = np.hypot(*(c[:, None, :] - c[None, :, :]).transpose(2, 0, 1))
            if gaps[np.triu_indices(spec.k, 1)].min() >= sep:
                return c
        sep *= 0.9


def gen_prior_field(spec: SynthSpec) -> ProbabilityField:
    """Softmax over one Gaussian bump per segment."""
    if spec.k < 2:
        raise ValueError("need at least two segments")
    h, w = spec.lattice.shape
    rng = np.random.default_rng([spec.seed, 0])
    centers = _bump_centers(spec, rng)
    width = spec.field_scale * min(h, w)
    yy, xx = np.mgrid[:h, :w]
    z = np.stack(
        [np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2)) for cy, cx in centers],
        axis=-1,
    )
    temp = spec.temperature if spec.temperature is not None else TEMPERATURE[spec.uncertainty]
    return ProbabilityField.from_image(softmax(z / temp, axis=-1))


def sample_student_t(c: ComponentParams, n: int, rng) -> np.ndarray:
    """Draw ``n`` samples as a Gaussian vector divided by an independent chi scaler."""
    z = rng.standard_normal((n, c.dim)) @ c.chol.T
    if c.is_gaussian:
        return c.mu + z
    u = rng.chisquare(c.nu, size=n) / c.nu
    return c.mu + z / np.sqrt(u)[:, None]


def sample_image(spec: SynthSpec, p: ProbabilityField) -> tuple[FeatureField, LabelMap]:
    if p.k != spec.k:
        raise KMismatch(f"field has {p.k} channels, spec has k={spec.k}")
    rng = np.random.default_rng([spec.seed, 1])
    u = rng.random(p.lattice.size)
    cdf = np.cumsum(p.data, axis=1)
    labels = np.minimum((u[:, None] >= cdf).sum(axis=1), spec.k - 1)
    x = np.empty((p.lattice.size, 3))
    for j, c in enumerate(spec.components):
        idx = np.flatnonzero(labels == j)
        x[idx] = sample_student_t(c, idx.size, rng)
    return FeatureField(p.lattice, x), LabelMap(p.lattice, labels)


def make_synthetic(spec: SynthSpec):
    """Convenience wrapper: ``(p_true, features, labels)``."""
    p = gen_prior_field(spec)
    f, labels = sample_image(spec, p)
    return p, f, labels


def best_permutation(p_true: ProbabilityField, p_est: ProbabilityField) -> np.ndarray:
    """Column order of ``p_est`` minimizing the mean absolute error against ``p_true``.

    Exhaustive over all K! orderings for K <= 6, Hungarian assignment above.
    """
    a, b = p_true.data, p_est.data
    k = a.shape[1]
    cost = np.abs(a[:, :, None] - b[:, None, :]).sum(axis=0)
    if k <= 6:
        best = min(itertools.permutations(range(k)), key=lambda perm: cost[range(k), perm].sum())
        return np.array(best)
    _, cols = linear_sum_assignment(cost)
    return cols


def recovery_mae(p_true: ProbabilityField, p_est: ProbabilityField) -> float:
    """Mean absolute error over pixels and channels after matching components."""
    if p_true.k != p_est.k:
        raise KMismatch(f"K differs: {p_true.k} vs {p_est.k}")
    if p_true.lattice != p_est.lattice:
        raise ValueError("fields live on different lattices")
    perm = best_permutation(p_true, p_est)
    return float(np.abs(p_true.data - p_est.data[:, perm]).mean())
