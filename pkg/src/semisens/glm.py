"""Weighted logistic and least-squares fits with offsets.

Used for the ``(delta, gamma) = (0, 0)`` starting point and for the M-step of
the EM comparator.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import SeparationError
from .model import BERNOULLI, Dataset, ModelSpec, Theta


def logistic_irls(X, y, weights=None, offset=None, init=None, tol=1e-10, max_iter=100):
    """Newton-Raphson (IRLS) for a weighted logistic regression.

    Raises :class:`SeparationError` when coefficients diverge or the
    information matrix becomes singular.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    beta = np.zeros(p) if init is None else np.array(init, dtype=float)
    for _ in range(max_iter):
        mu = expit(X @ beta + off)
        grad = X.T @ (w * (y - mu))
        info = (X * (w * mu * (1.0 - mu))[:, None]).T @ X
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise SeparationError("singular information matrix in logistic fit") from exc
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.max(np.abs(beta)) > 1e3:
            raise SeparationError("logistic fit diverged (separation)")
        if np.max(np.abs(step)) < tol * (1.0 + np.max(np.abs(beta))):
            return beta
    raise SeparationError(f"logistic fit did not converge in {max_iter} iterations")


def weighted_ols(X, y, weights=None, offset=None):
    X = np.asarray(X, dtype=float)
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    r = np.asarray(y, dtype=float) - (0.0 if offset is None else np.asarray(offset, dtype=float))
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], r * sw, rcond=None)
    return coef


def primary_fit(data: Dataset, spec: ModelSpec = ModelSpec(), sigma: float = 1.0) -> Theta:
    """Outcome and propensity regressions ignoring U."""
    design = np.column_stack([data.X, data.z])
    if spec.outcome_family == BERNOULLI:
        out = logistic_irls(design, data.y)
    else:
        out = weighted_ols(design, data.y)
    kappa = logistic_irls(data.X, data.z)
    return Theta(out[:-1], out[-1], kappa, sigma)
