"""MAP expectation-maximization for spatially regularized Student-t mixtures.

One iteration runs, in order: E-step (responsibilities), M-step for the
component parameters, then the location/scale fields and the closed-form
prior update computed from the same responsibilities.  The objective is the
marginal negative log-posterior

    -sum_n ln sum_k p_nk t(x_n; alpha_k) - sum_n ln Dir(p_n; m_n / s_n^2 + 1)

recorded after every iteration.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import gammaln, logsumexp, xlogy

from .core import FeatureField, ProbabilityField
from .errors import EmptyComponent, TooFewSamples
from .prior import PriorState, SmoothingKernel, uniform_prior, update_prior
from .studentt import (
    NU_INIT,
    NU_MAX,
    NU_MIN,
    ComponentParams,
    kappa,
    log_pdf_from_dsq,
    mahalanobis_sq,
    omega,
    solve_nu,
)

log = logging.getLogger(__name__)

ModelKind = Literal["student_t", "gaussian"]

# s^2 floor used only when evaluating the Dirichlet density; at s^2 = 0 the
# density is a point mass and its log is unbounded.
DIRICHLET_S2_FLOOR = 1e-8


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 200
    rel_tol: float = 1e-5
    seed: int = 0
    sigma: float = 4.25
    min_component_mass: float | None = None  # None means D + 1
    model_kind: ModelKind = "student_t"
    with_spatial_prior: bool = True
    # without the spatial prior: learn global mixing weights, or keep them uniform
    learn_mixing: bool = True
    kmeans_iters: int = 20

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if self.model_kind not in ("student_t", "gaussian"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")


@dataclass(frozen=True, eq=False)
class MixtureModel:
    components: tuple[ComponentParams, ...]
    prior: PriorState
    model_kind: ModelKind = "student_t"
    with_spatial_prior: bool = True

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        if len({c.dim for c in comps}) != 1:
            raise ValueError("components have different dimensions")
        if self.prior.p.k != len(comps):
            raise ValueError("prior field and component count disagree")
        object.__setattr__(self, "components", comps)

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim


@dataclass
class FitTrace:
    objective_per_iter: list[float] = field(default_factory=list)
    converged: bool = False
    reinit_iters: list[int] = field(default_factory=list)

    @property
    def n_iters(self) -> int:
        return len(self.objective_per_iter)


def _initial_nu(kind):
    return math.inf if kind == "gaussian" else NU_INIT


def _jitter(cov):
    d = cov.shape[0]
    scale = np.trace(cov) / d
    return 1e-6 * (scale if scale > 0 else 1.0) * np.eye(d)


def _weighted_cov(x, w, mu, denom):
    diff = x - mu
    return (diff * w[:, None]).T @ diff / denom


def global_covariance(f: FeatureField) -> np.ndarray:
    x = f.data
    return np.atleast_2d(np.cov(x, rowvar=False, bias=True))


def init_model(f: FeatureField, k: int, config: FitConfig = FitConfig()) -> MixtureModel:
    """k-means++ seeded k-means, then per-cluster mean and scatter.

    Mixing probabilities start uniform.  Deterministic for a given seed.
    """
    x = f.data
    n, d = x.shape
    if k < 1 or k > n:
        raise TooFewSamples(f"cannot fit {k} components to {n} samples")
    gcov = global_covariance(f)
    if k == 1:
        labels = np.zeros(n, dtype=int)
    else:
        rng = np.random.default_rng(config.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, labels = kmeans2(x, k, iter=config.kmeans_iters, minit="++", seed=rng)
    nu = _initial_nu(config.model_kind)
    comps = []
    for j in range(k):
        members = x[labels == j]
        if members.shape[0] > d:
            mu = members.mean(axis=0)
            cov = np.atleast_2d(np.cov(members, rowvar=False, bias=True))
        else:
            mu = members.mean(axis=0) if members.size else x[j * n // k]
            cov = gcov
        comps.append(ComponentParams(nu, mu, cov + _jitter(gcov)))
    return MixtureModel(
        tuple(comps),
        uniform_prior(f.lattice, k),
        model_kind=config.model_kind,
        with_spatial_prior=config.with_spatial_prior,
    )


def component_log_densities(components, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(log_dens, d_sq)``, both ``(N, K)``."""
    d_sq = np.column_stack([mahalanobis_sq(c, x) for c in components])
    log_dens = np.column_stack(
        [log_pdf_from_dsq(c, d_sq[:, j]) for j, c in enumerate(components)]
    )
    return log_dens, d_sq


def _posterior(p, log_dens):
    with np.errstate(divide="ignore"):
        joint = np.log(p) + log_dens
    lse = logsumexp(joint, axis=1, keepdims=True)
    return np.exp(joint - lse), lse[:, 0]


def e_step(model: MixtureModel, f: FeatureField) -> ProbabilityField:
    log_dens, _ = component_log_densities(model.components, f.data)
    tau, _ = _posterior(model.prior.p.data, log_dens)
    return ProbabilityField(f.lattice, tau)


def _reinit_components(model, f, dead, log_dens):
    """Move dead components onto the worst-explained samples."""
    worst_fit = log_dens.max(axis=1)
    order = np.argsort(worst_fit, kind="stable")
    gcov = global_covariance(f)
    comps = list(model.components)
    for i, j in enumerate(dead):
        comps[j] = ComponentParams(
            _initial_nu(model.model_kind), f.data[order[i]], gcov + _jitter(gcov)
        )
    p = model.prior.p.data.copy()
    p[:, dead] = np.maximum(p[:, dead], 1.0 / model.k)
    p /= p.sum(axis=1, keepdims=True)
    prior = replace(model.prior, p=ProbabilityField(f.lattice, p))
    return replace(model, components=tuple(comps), prior=prior)


def _update_component(c: ComponentParams, x, t, d_sq_col) -> ComponentParams:
    mass = t.sum()
    w_om = omega(c, d_sq_col)
    w = t * w_om
    mu = w @ x / w.sum()
    sigma = _weighted_cov(x, w, mu, mass)
    nu = c.nu if c.is_gaussian else solve_nu(kappa(c, t, w_om), NU_MIN, NU_MAX)
    return ComponentParams(nu, mu, sigma)


def m_step_components(
    f: FeatureField,
    tau: ProbabilityField,
    model: MixtureModel,
    min_component_mass: float | None = None,
    d_sq: np.ndarray | None = None,
) -> tuple[ComponentParams, ...]:
    """Update every ``(nu, mu, Sigma)`` from responsibilities ``tau``.

    The weights ``omega`` (and the ``nu`` equation) use the previous
    parameters.  Means are ``tau * omega`` weighted; the scatter matrix is
    normalized by the responsibility mass alone.  Raises
    :class:`EmptyComponent` for a component whose mass is below
    ``min_component_mass`` (default ``D + 1``); :func:`fit` handles that
    case by reinitializing the component.
    """
    x = f.data
    min_mass = f.dim + 1 if min_component_mass is None else min_component_mass
    if d_sq is None:
        d_sq = np.column_stack([mahalanobis_sq(c, x) for c in model.components])
    new = []
    for j, c in enumerate(model.components):
        t = tau.data[:, j]
        if t.sum() < min_mass:
            raise EmptyComponent(j, t.sum())
        new.append(_update_component(c, x, t, d_sq[:, j]))
    return tuple(new)


def dirichlet_log_pdf(p, a) -> np.ndarray:
    """Row-wise Dirichlet log-density; ``0 * ln 0`` is taken as 0."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    return gammaln(a.sum(axis=1)) - gammaln(a).sum(axis=1) + xlogy(a - 1.0, p).sum(axis=1)


def _objective_terms(model, log_dens):
    p = model.prior.p.data
    _, lse = _posterior(p, log_dens)
    nll = -float(lse.sum())
    if not model.with_spatial_prior or model.k == 1:
        return nll, 0.0
    s2 = np.maximum(model.prior.scale_sq, DIRICHLET_S2_FLOOR)[:, None]
    a = model.prior.location.data / s2 + 1.0
    return nll, -float(dirichlet_log_pdf(p, a).sum())


def objective(model: MixtureModel, f: FeatureField) -> float:
    """Marginal negative log-posterior of ``f`` under ``model``."""
    log_dens, _ = component_log_densities(model.components, f.data)
    return sum(_objective_terms(model, log_dens))


def _update_mixing(model, tau, g, config):
    if model.with_spatial_prior:
        return update_prior(g, tau)
    if not config.learn_mixing:
        return model.prior
    weights = tau.data.mean(axis=0)
    weights = weights / weights.sum()
    p = ProbabilityField(tau.lattice, np.broadcast_to(weights, tau.data.shape))
    return PriorState(p, np.zeros(tau.lattice.size), p)


def fit(
    f: FeatureField,
    k: int,
    config: FitConfig = FitConfig(),
    model: MixtureModel | None = None,
    callback=None,
) -> tuple[MixtureModel, ProbabilityField, FitTrace]:
    """Run EM until the relative objective change drops below ``config.rel_tol``.

    ``callback(iteration, model, tau)``, when given, is called after every
    iteration with the updated model and the responsibilities it was built
    from.  Returns the final model, responsibilities under that model, and
    the trace.
    """
    if model is None:
        model = init_model(f, k, config)
    g = SmoothingKernel(config.sigma)
    min_mass = f.dim + 1 if config.min_component_mass is None else config.min_component_mass
    trace = FitTrace()
    log_dens, d_sq = component_log_densities(model.components, f.data)
    prev = None
    for it in range(config.max_iters):
        tau_arr, _ = _posterior(model.prior.p.data, log_dens)
        tau = ProbabilityField(f.lattice, tau_arr)
        dead = [j for j in range(model.k) if tau_arr[:, j].sum() < min_mass]
        if dead:
            log.info("iteration %d: reinitializing components %s", it, dead)
            trace.reinit_iters.append(it)
            model = _reinit_components(model, f, dead, log_dens)
            log_dens, d_sq = component_log_densities(model.components, f.data)
            tau_arr, _ = _posterior(model.prior.p.data, log_dens)
            tau = ProbabilityField(f.lattice, tau_arr)
        comps = list(model.components)
        for j, c in enumerate(comps):
            t = tau_arr[:, j]
            # a freshly reinitialized component may still be starved; leave it in place
            if t.sum() >= min_mass:
                comps[j] = _update_component(c, f.data, t, d_sq[:, j])
        prior = _update_mixing(model, tau, g, config)
        model = replace(model, components=tuple(comps), prior=prior)
        log_dens, d_sq = component_log_densities(model.components, f.data)
        obj = sum(_objective_terms(model, log_dens))
        trace.objective_per_iter.append(obj)
        if callback is not None:
            callback(it, model, tau)
        if prev is not None and abs(obj - prev) <= config.rel_tol * abs(prev):
            trace.converged = True
            break
        prev = obj
    tau_arr, _ = _posterior(model.prior.p.data, log_dens)
    return model, ProbabilityField(f.lattice, tau_arr), trace
