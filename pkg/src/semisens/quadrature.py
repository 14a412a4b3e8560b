"""Quadrature rules: trapezoid weights on the U grid and Gauss-Hermite nodes
for expectations over a Gaussian outcome.

The central helper is :func:`expectation_cells`. It returns a finite set of
``(y, z)`` cells together with weights ``omega[c, j]`` such that

    E[g(Y, Z) | X = x, U = u_j] ~= sum_c omega[c, j] * g(y_c, z_c)

For a Bernoulli outcome the four cells are exact. For a Gaussian outcome each
``u_j`` gets its own Hermite nodes centred at the outcome mean, crossed with the
two treatment values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .model import BERNOULLI, ModelSpec, SensitivityPoint, Theta, WorkingPrior, point_prior
from .model import eta_outcome, eta_propensity, log_density_outcome, log_density_treatment

MAX_HERMITE_ORDER = 128
DEFAULT_HERMITE_ORDER = 64


@dataclass(frozen=True)
class NewtonCotesRule:
    weights: np.ndarray
    mesh: float = 1.0

    def integrate(self, values) -> float:
        return float(self.mesh * np.dot(self.weights, values))


@dataclass(frozen=True)
class HermiteRule:
    """Nodes/weights for the weight function ``exp(-t**2)``."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.nodes.size

    def normal_expectation(self, g, mean=0.0, sd=1.0):
        """``E[g(Y)]`` for ``Y ~ N(mean, sd**2)``; ``g`` must be vectorized."""
        y = mean + math.sqrt(2.0) * sd * self.nodes
        return np.dot(self.weights, g(y)) / math.sqrt(math.pi)


def trapezoid(K: int, mesh: float = 1.0) -> NewtonCotesRule:
    """Trapezoid weights ``(1/2, 1, ..., 1, 1/2)`` for ``K + 1`` equal-spaced points."""
    if K < 1:
        raise ValueError("trapezoid rule needs K >= 1 (at least two points)")
    w = np.ones(K + 1)
    w[0] = w[-1] = 0.5
    return NewtonCotesRule(w, mesh)


@lru_cache(maxsize=None)
def _hermgauss(order: int):
    t, w = hermgauss(order)
    # hermgauss is symmetric only up to rounding; enforce it exactly
    t = 0.5 * (t - t[::-1])
    w = 0.5 * (w + w[::-1])
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def hermite(order: int = DEFAULT_HERMITE_ORDER) -> HermiteRule:
    if order < 1:
        raise ValueError("Hermite order must be at least 1")
    if order > MAX_HERMITE_ORDER:
        raise ValueError(f"Hermite order {order} exceeds the supported maximum {MAX_HERMITE_ORDER}")
    t, w = _hermgauss(order)
    return HermiteRule(t, w)


def expectation_cells(X, theta: Theta, sp: SensitivityPoint, prior: WorkingPrior,
                      spec: ModelSpec, order: int = DEFAULT_HERMITE_ORDER):
    """Cells and weights for conditional expectations given ``(x_i, u_j)``.

    Parameters
    ----------
    X : ndarray, shape (n, p)

    Returns
    -------
    y, z : ndarray, shape (n, C)
    omega : ndarray, shape (n, C, K)
        ``omega[i, c, j]`` is the weight of cell ``c`` under ``f(. | x_i, u_j)``.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    u = prior.support
    K = u.size
    eta2 = eta_propensity(theta, X[:, None, :], u, sp)                      # (n, K)
    if spec.outcome_family == BERNOULLI:
        y = np.broadcast_to(np.array([0.0, 0.0, 1.0, 1.0]), (n, 4))
        z = np.broadcast_to(np.array([0.0, 1.0, 0.0, 1.0]), (n, 4))
        eta1 = eta_outcome(theta, X[:, None, None, :], z[:, :, None], u, sp)  # (n, 4, K)
        logw = (log_density_outcome(y[:, :, None], eta1, spec)
                + log_density_treatment(z[:, :, None], eta2[:, None, :]))
        return y, z, np.exp(logw)

    rule = hermite(order)
    M = rule.order
    zz = np.array([0.0, 1.0])
    # cell layout: (j, z, m) flattened
    eta1 = eta_outcome(theta, X[:, None, None, :], zz[None, None, :], u[None, :, None], sp)  # (n, K, 2)
    y = eta1[..., None] + math.sqrt(2.0) * theta.sigma * rule.nodes                       # (n, K, 2, M)
    z = np.broadcast_to(zz[None, None, :, None], y.shape)
    pz = np.exp(log_density_treatment(zz[None, None, :], eta2[:, :, None]))               # (n, K, 2)
    w = pz[..., None] * (rule.weights / math.sqrt(math.pi))                              # (n, K, 2, M)
    omega = np.zeros((n, K, 2, M, K))
    idx = np.arange(K)
    omega[:, idx, :, :, idx] = np.moveaxis(w, 1, 0)
    C = K * 2 * M
    return y.reshape(n, C), np.ascontiguousarray(z).reshape(n, C), omega.reshape(n, C, K)


def yz_expectation(g, x, u: float, theta: Theta, sp: SensitivityPoint,
                   spec: ModelSpec = ModelSpec(), order: int = DEFAULT_HERMITE_ORDER):
    """``E[g(Y, Z) | x, u]`` with ``g`` vectorized over arrays of ``(y, z)``."""
    x = np.asarray(x, dtype=float)[None, :]
    y, z, omega = expectation_cells(x, theta, sp, point_prior(u), spec, order)
    vals = np.asarray(g(y[0], z[0]), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        c = int(np.argwhere(bad.reshape(bad.shape[0], -1).any(axis=1))[0, 0])
        raise ValueError(f"integrand is not finite at (y, z) = ({y[0, c]:g}, {z[0, c]:g})")
    return np.tensordot(omega[0, :, 0], vals, axes=(0, 0))
