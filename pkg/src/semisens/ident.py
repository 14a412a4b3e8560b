"""Closed-form identification for binary ``(U, Z, Y)`` without covariates.

The inversion works in the log-linear parametrization

    L(y, z) ∝ exp(beta0 y + alpha0 z + beta_z y z) * M(delta y + gamma z)

where ``M`` is the moment generating function of U given ``Y = 0, Z = 0``.
``beta0`` and ``beta_z`` coincide with the logistic outcome intercept and
treatment effect, but ``alpha0`` and ``gamma`` are log-odds of Z given
``(Y = 0, U)``, not propensity-model coefficients. :func:`loglinear_from_logistic`
translates a logistic-logistic model with a two-point U into this form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SemisensError
from .model import SensitivityPoint, WorkingPrior


@dataclass(frozen=True)
class ObservedCells:
    """Cell probabilities ``L[y, z]``."""

    L: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float).reshape(2, 2)
        if np.any(L < 0) or not np.all(np.isfinite(L)):
            raise ValueError("cell probabilities must be finite and nonnegative")
        if abs(L.sum() - 1.0) > 1e-12:
            raise ValueError(f"cell probabilities sum to {L.sum():.15g}, not 1")
        object.__setattr__(self, "L", L)

    @classmethod
    def from_counts(cls, y, z) -> "ObservedCells":
        y = np.asarray(y, dtype=int)
        z = np.asarray(z, dtype=int)
        counts = np.zeros((2, 2))
        np.add.at(counts, (y, z), 1.0)
        return cls(counts / counts.sum())

    @classmethod
    def normalized(cls, L) -> "ObservedCells":
        L = np.asarray(L, dtype=float).reshape(2, 2)
        return cls(L / L.sum())


@dataclass(frozen=True)
class IdentifiedParams:
    alpha0: float
    beta0: float
    beta_z: float


def mgf(prior: WorkingPrior, t: float) -> float:
    """``sum_k pi_k exp(t u_k)``."""
    if not math.isfinite(t):
        raise ValueError("mgf argument must be finite")
    with np.errstate(over="raise"):
        try:
            val = float(np.dot(prior.weights, np.exp(t * prior.support)))
        except FloatingPointError as exc:
            raise SemisensError(f"mgf overflow at t = {t}") from exc
    if not math.isfinite(val):
        raise SemisensError(f"mgf overflow at t = {t}")
    return val


def identify(cells: ObservedCells, prior: WorkingPrior, sp: SensitivityPoint) -> IdentifiedParams:
    """Invert the observed cells given the law of U given ``Y = 0, Z = 0``."""
    L = cells.L
    if np.any(L <= 0):
        raise SemisensError("boundary likelihood; not identifiable by inversion")
    d, g = sp.delta, sp.gamma
    Md, Mg, Mdg = mgf(prior, d), mgf(prior, g), mgf(prior, d + g)
    alpha0 = math.log(L[0, 1] / (L[0, 0] * Mg))
    beta0 = math.log(L[1, 0] / (L[0, 0] * Md))
    beta_z = math.log(L[1, 1] * L[0, 0] / (L[0, 1] * L[1, 0]) * Md * Mg / Mdg)
    return IdentifiedParams(alpha0, beta0, beta_z)


def loglinear_cells(params: IdentifiedParams, prior: WorkingPrior, sp: SensitivityPoint) -> ObservedCells:
    """Forward map of the log-linear form, by summing over the support of U."""
    u = prior.support
    L = np.empty((2, 2))
    for y in (0, 1):
        for z in (0, 1):
            lin = params.beta0 * y + params.alpha0 * z + params.beta_z * y * z
            L[y, z] = np.dot(prior.weights, np.exp(lin + (sp.delta * y + sp.gamma * z) * u))
    return ObservedCells(L / L.sum())


def _bern_logpmf(v, eta):
    # log P(V = v) for V ~ Bernoulli(expit(eta))
    return v * eta - np.logaddexp(0.0, eta)


def logistic_joint(beta0: float, beta_z: float, kappa0: float, prior: WorkingPrior,
                   sp: SensitivityPoint) -> np.ndarray:
    """``f(y, z, u_k)`` for logistic outcome and treatment models; shape (2, 2, K)."""
    u = prior.support
    out = np.empty((2, 2, u.size))
    for y in (0, 1):
        for z in (0, 1):
            out[y, z] = np.exp(_bern_logpmf(y, beta0 + beta_z * z + sp.delta * u)
                               + _bern_logpmf(z, kappa0 + sp.gamma * u)) * prior.weights
    return out


def logistic_cells(beta0: float, beta_z: float, kappa0: float, prior: WorkingPrior,
                   sp: SensitivityPoint) -> ObservedCells:
    return ObservedCells.normalized(logistic_joint(beta0, beta_z, kappa0, prior, sp).sum(axis=-1))


def conditional_law(beta0: float, beta_z: float, kappa0: float, prior: WorkingPrior,
                    sp: SensitivityPoint) -> WorkingPrior:
    """Law of U given ``Y = 0, Z = 0`` under the logistic-logistic model."""
    w = logistic_joint(beta0, beta_z, kappa0, prior, sp)[0, 0]
    return WorkingPrior(prior.support, w / w.sum(), label="conditional(U | Y=0, Z=0)")


def loglinear_from_logistic(beta0: float, beta_z: float, kappa0: float, prior: WorkingPrior,
                            sp: SensitivityPoint):
    """Map a logistic-logistic model with a two-point U to the log-linear form.

    Returns ``(IdentifiedParams, gamma_loglinear, conditional_prior)``. The
    outcome normalizer ``log(1 + exp(beta0 + beta_z z + delta u))`` leaks a
    ``z``-by-``u`` term into the joint, so the log-linear ``alpha0`` and
    ``gamma`` absorb it. With two support points that term is exactly linear in
    ``u``.
    """
    u = prior.support
    if u.size != 2:
        raise ValueError("the log-linear mapping is exact only for a two-point U")
    dz = np.logaddexp(0.0, beta0 + sp.delta * u) - np.logaddexp(0.0, beta0 + beta_z + sp.delta * u)
    slope = (dz[1] - dz[0]) / (u[1] - u[0])
    intercept = dz[0] - slope * u[0]
    params = IdentifiedParams(kappa0 + intercept, beta0, beta_z)
    return params, sp.gamma + slope, conditional_law(beta0, beta_z, kappa0, prior, sp)
