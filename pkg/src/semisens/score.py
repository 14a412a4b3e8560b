"""Full-data scores, mixture likelihoods over the working prior, posterior
weights of U, and observed-data scores.

All public functions broadcast over leading axes of ``y``, ``z`` and ``x``
(``x`` carries the covariate axis last), so a whole dataset is handled in one
call. The score vector is ordered ``(lambda block, beta, kappa block)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DegenerateLikelihoodError
from .model import ModelSpec, SensitivityPoint, Theta, WorkingPrior, GAUSSIAN
from .model import eta_outcome, eta_propensity, log_density_outcome, log_density_treatment, mean_outcome


def _score_from_residuals(r1, r2, x, z, theta: Theta, spec: ModelSpec):
    """Stack ``r1 * (x, z) / s2`` and ``r2 * x`` into a score vector."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if spec.outcome_family == GAUSSIAN:
        r1 = r1 / theta.sigma ** 2
    r1 = np.asarray(r1)[..., None]
    r2 = np.asarray(r2)[..., None]
    shape = np.broadcast_shapes(r1.shape[:-1], x.shape[:-1], np.shape(z))
    x = np.broadcast_to(x, shape + (theta.p,))
    zc = np.broadcast_to(z, shape)[..., None]
    return np.concatenate([r1 * x, r1 * zc, r2 * x], axis=-1)


def full_score(y, z, x, u, theta: Theta, sp: SensitivityPoint, spec: ModelSpec = ModelSpec()):
    """Score of ``theta`` when U is observed; ``(delta, gamma)`` are held fixed."""
    mu1 = mean_outcome(eta_outcome(theta, x, z, u, sp), spec)
    mu2 = expit(eta_propensity(theta, x, u, sp))
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    return _score_from_residuals(y - mu1, z - mu2, x, z, theta, spec)


@dataclass
class GridTerms:
    """Per-cell quantities on the U grid.

    Shapes use ``n`` observations, ``C`` cells per observation and ``K`` grid
    points: ``post`` is (n, C, K), ``log_istar``/``m1``/``m2`` are (n, C).
    """

    post: np.ndarray
    log_istar: np.ndarray
    m1: np.ndarray
    m2: np.ndarray


def grid_terms(y, z, X, theta: Theta, sp: SensitivityPoint, prior: WorkingPrior,
               spec: ModelSpec = ModelSpec()) -> GridTerms:
    """Posterior of U and posterior means of both regression means, per cell.

    ``y`` and ``z`` have shape (n, C); ``X`` has shape (n, p).
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    X = np.asarray(X, dtype=float)
    u = prior.support
    eta1 = eta_outcome(theta, X[:, None, None, :], z[..., None], u, sp)     # (n, C, K)
    eta2 = eta_propensity(theta, X[:, None, :], u, sp)                       # (n, K)
    lj = (log_density_outcome(y[..., None], eta1, spec, theta.sigma)
          + log_density_treatment(z[..., None], eta2[:, None, :])
          + prior.log_weights)
    log_istar = logsumexp(lj, axis=-1)
    if not np.all(np.isfinite(log_istar)):
        i = int(np.argwhere(~np.isfinite(log_istar))[0, 0])
        raise DegenerateLikelihoodError(f"degenerate likelihood at observation {i}")
    post = np.exp(lj - log_istar[..., None])
    m1 = np.einsum("nck,nck->nc", post, mean_outcome(eta1, spec))
    m2 = np.einsum("nck,nk->nc", post, expit(eta2))
    return GridTerms(post, log_istar, m1, m2)


def observed_score_from_terms(y, z, X, terms: GridTerms, theta: Theta, spec: ModelSpec):
    """(n, C, q) observed scores from precomputed grid terms."""
    return _score_from_residuals(np.asarray(y) - terms.m1, np.asarray(z) - terms.m2,
                                 np.asarray(X)[:, None, :], z, theta, spec)


def _as_cells(y, z, x):
    """Flatten leading axes into (n, 1) cells; returns the original shape too."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    shape = np.broadcast_shapes(y.shape, z.shape, x.shape[:-1])
    n = int(np.prod(shape, dtype=int))
    yy = np.broadcast_to(y, shape).reshape(n, 1)
    zz = np.broadcast_to(z, shape).reshape(n, 1)
    xx = np.broadcast_to(x, shape + x.shape[-1:]).reshape(n, x.shape[-1])
    return yy, zz, xx, shape


def log_istar(y, z, x, theta: Theta, sp: SensitivityPoint, prior: WorkingPrior,
              spec: ModelSpec = ModelSpec()):
    yy, zz, xx, shape = _as_cells(y, z, x)
    return grid_terms(yy, zz, xx, theta, sp, prior, spec).log_istar.reshape(shape)


def istar(y, z, x, theta: Theta, sp: SensitivityPoint, prior: WorkingPrior,
          spec: ModelSpec = ModelSpec()):
    """Mixture likelihood ``sum_k pi_k f(y, z | x, u_k)``."""
    return np.exp(log_istar(y, z, x, theta, sp, prior, spec))


def posterior_weights(y, z, x, theta: Theta, sp: SensitivityPoint, prior: WorkingPrior,
                      spec: ModelSpec = ModelSpec()):
    """Working-model posterior of U over the grid; last axis has length K."""
    yy, zz, xx, shape = _as_cells(y, z, x)
    post = grid_terms(yy, zz, xx, theta, sp, prior, spec).post
    return post.reshape(shape + (prior.size,))


def observed_score(y, z, x, theta: Theta, sp: SensitivityPoint, prior: WorkingPrior,
                   spec: ModelSpec = ModelSpec()):
    """Posterior mean of :func:`full_score` given the observed ``(x, z, y)``."""
    yy, zz, xx, shape = _as_cells(y, z, x)
    terms = grid_terms(yy, zz, xx, theta, sp, prior, spec)
    s = observed_score_from_terms(yy, zz, xx, terms, theta, spec)
    return s.reshape(shape + (theta.q,))
