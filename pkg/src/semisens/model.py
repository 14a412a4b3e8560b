"""Data layout, parameter containers, densities and working priors.

The outcome model is ``g1(E[Y | X, Z, U]) = lambda'X + beta Z + delta U`` and the
propensity model is ``logit P(Z = 1 | X, U) = kappa'X + gamma U``. Both links are
canonical, so every score below is a residual times a design row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DimensionError

BERNOULLI = "bernoulli"
GAUSSIAN = "gaussian"
FAMILIES = (BERNOULLI, GAUSSIAN)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelSpec:
    """Outcome family; the propensity model is always Bernoulli-logit."""

    outcome_family: str = BERNOULLI
    propensity_family: str = BERNOULLI

    def __post_init__(self):
        if self.outcome_family not in FAMILIES:
            raise ValueError(f"unknown outcome family {self.outcome_family!r}; choose from {FAMILIES}")
        if self.propensity_family != BERNOULLI:
            raise ValueError("propensity family must be bernoulli (logit link)")


@dataclass(frozen=True)
class SensitivityPoint:
    delta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.delta) and math.isfinite(self.gamma)):
            raise ValueError(f"sensitivity parameters must be finite, got ({self.delta}, {self.gamma})")

    @property
    def is_null(self) -> bool:
        """True at (0, 0), where the primary analysis is recovered."""
        return self.delta == 0.0 and self.gamma == 0.0


@dataclass(frozen=True)
class Dataset:
    """Complete-case observed data ``(y, z, X)``; ``X[:, 0]`` is the intercept."""

    y: np.ndarray
    z: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        z = np.asarray(self.z, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DimensionError("X", X.ndim, 2, what="number of dimensions")
        n = X.shape[0]
        if y.shape != (n,):
            raise DimensionError("y", y.shape[0] if y.ndim else 0, n)
        if z.shape != (n,):
            raise DimensionError("z", z.shape[0] if z.ndim else 0, n)
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z)) and np.all(np.isfinite(X))):
            raise ValueError("dataset contains missing or non-finite entries")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("treatment entries must be 0 or 1")
        if n and not np.all(X[:, 0] == 1.0):
            raise ValueError("first column of X must be the intercept (all ones)")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def check_family(self, spec: ModelSpec) -> None:
        if spec.outcome_family == BERNOULLI and not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("bernoulli outcome requires y in {0, 1}")


@dataclass(frozen=True)
class Theta:
    """Estimated parameters ``(lambda, beta, kappa)`` plus the fixed outcome scale."""

    lam: np.ndarray
    beta: float
    kappa: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        if lam.shape != kappa.shape:
            raise DimensionError("kappa", kappa.shape[0], lam.shape[0])
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def p(self) -> int:
        return self.lam.shape[0]

    @property
    def q(self) -> int:
        return 2 * self.p + 1

    @property
    def beta_index(self) -> int:
        return self.p

    def vector(self) -> np.ndarray:
        return np.concatenate([self.lam, [self.beta], self.kappa])

    @classmethod
    def from_vector(cls, vec, p: int, sigma: float = 1.0) -> "Theta":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (2 * p + 1,):
            raise DimensionError("theta vector", vec.shape[0] if vec.ndim else 0, 2 * p + 1)
        return cls(vec[:p], vec[p], vec[p + 1:], sigma)

    @classmethod
    def zeros(cls, p: int, sigma: float = 1.0) -> "Theta":
        return cls(np.zeros(p), 0.0, np.zeros(p), sigma)

    def names(self) -> list[str]:
        return ([f"lambda_{j}" for j in range(self.p)] + ["beta"]
                + [f"kappa_{j}" for j in range(self.p)])


@dataclass(frozen=True)
class WorkingPrior:
    """Discrete working law for U on ``support`` with masses ``weights``.

    ``kind == "grid"`` marks an equal-spaced grid standing in for a continuous
    law; those priors are integrated with the trapezoid rule in the integral
    equation. Every other prior is treated as an exact discrete law.
    """

    support: np.ndarray
    weights: np.ndarray
    kind: str = "discrete"
    mesh: float | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.support, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if u.size == 0:
            raise ValueError("working prior has empty support")
        if u.shape != w.shape:
            raise DimensionError("weights", w.size, u.size)
        if not np.all(np.isfinite(u)):
            raise ValueError("support points must be finite")
        if np.any(np.diff(u) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("prior weights must be nonnegative and finite")
        total = w.sum()
        if not total > 0:
            raise ValueError("prior weights are not normalizable")
        object.__setattr__(self, "support", u)
        object.__setattr__(self, "weights", w / total)

    @property
    def size(self) -> int:
        return self.support.size

    @property
    def continuous(self) -> bool:
        return self.kind == "grid"

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def __str__(self):
        if self.label:
            return self.label
        return f"weights:{','.join(f'{u:g}={w:g}' for u, w in zip(self.support, self.weights))}"


def grid_prior(lo: float, hi: float, mesh: float) -> WorkingPrior:
    """Uniform masses on ``lo, lo + h, ..., hi``."""
    if not mesh > 0:
        raise ValueError(f"mesh must be positive, got {mesh}")
    if not hi > lo:
        raise ValueError(f"grid range must satisfy lo < hi, got [{lo}, {hi}]")
    steps = (hi - lo) / mesh
    m = int(round(steps)) if abs(steps - round(steps)) < 1e-9 else math.ceil(steps)
    support = np.linspace(lo, hi, m + 1)
    return WorkingPrior(support, np.full(m + 1, 1.0 / (m + 1)), kind="grid",
                        mesh=(hi - lo) / m, label=f"grid:{lo:g}:{hi:g}:{mesh:g}")


def bernoulli_prior(p: float) -> WorkingPrior:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"bernoulli probability must lie in [0, 1], got {p}")
    return WorkingPrior(np.array([0.0, 1.0]), np.array([1.0 - p, p]), label=f"bernoulli:{p:g}")


def weights_prior(support, weights) -> WorkingPrior:
    return WorkingPrior(support, weights)


def point_prior(u0: float) -> WorkingPrior:
    return WorkingPrior(np.array([float(u0)]), np.array([1.0]), label=f"weights:{u0:g}=1")


def make_prior(kind: str, **kwargs) -> WorkingPrior:
    """Build a working prior by name: ``grid``, ``bernoulli`` or ``weights``.

    >>> make_prior("bernoulli", p=0.2).weights
    array([0.8, 0.2])
    """
    if kind == "grid":
        lo, hi = kwargs.get("range", (0.0, 1.0))
        return grid_prior(lo, hi, kwargs["mesh"])
    if kind == "bernoulli":
        return bernoulli_prior(kwargs["p"])
    if kind == "weights":
        return weights_prior(kwargs["support"], kwargs["weights"])
    raise ValueError(f"unknown prior kind {kind!r}")


def parse_prior(text: str) -> WorkingPrior:
    """Parse ``bernoulli:<p>``, ``grid:<lo>:<hi>:<h>`` or ``weights:<u1=w1,...>``."""
    head, _, rest = text.strip().partition(":")
    try:
        if head == "bernoulli":
            return bernoulli_prior(float(rest))
        if head == "grid":
            lo, hi, h = (float(v) for v in rest.split(":"))
            return grid_prior(lo, hi, h)
        if head == "weights":
            pairs = [item.split("=") for item in rest.split(",") if item]
            pairs.sort(key=lambda kv: float(kv[0]))
            prior = weights_prior([float(u) for u, _ in pairs], [float(w) for _, w in pairs])
            return WorkingPrior(prior.support, prior.weights, label=text.strip())
    except (ValueError, KeyError) as exc:
        raise ValueError(f"cannot parse prior {text!r}: {exc}") from exc
    raise ValueError(f"unknown prior spec {text!r}; expected bernoulli:, grid: or weights:")


# --------------------------------------------------------------------------
# linear predictors and densities
# --------------------------------------------------------------------------

def _check_x(theta: Theta, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != theta.p:
        raise DimensionError("covariate row", x.shape[-1], theta.p)
    return x


def eta_outcome(theta: Theta, x, z, u, sp: SensitivityPoint):
    x = _check_x(theta, x)
    return x @ theta.lam + theta.beta * np.asarray(z, dtype=float) + sp.delta * np.asarray(u, dtype=float)


def eta_propensity(theta: Theta, x, u, sp: SensitivityPoint):
    x = _check_x(theta, x)
    return x @ theta.kappa + sp.gamma * np.asarray(u, dtype=float)


def log_density_outcome(y, eta, spec: ModelSpec, sigma: float = 1.0):
    """Log density of ``y`` given its linear predictor."""
    y = np.asarray(y, dtype=float)
    if spec.outcome_family == BERNOULLI:
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("bernoulli outcome requires y in {0, 1}")
        return y * eta - np.logaddexp(0.0, eta)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = (y - eta) / sigma
    return -0.5 * r * r - _LOG_SQRT_2PI - math.log(sigma)


def log_density_treatment(z, eta):
    z = np.asarray(z, dtype=float)
    if not np.all((z == 0) | (z == 1)):
        raise ValueError("treatment must be 0 or 1")
    return z * eta - np.logaddexp(0.0, eta)


def mean_outcome(eta, spec: ModelSpec):
    return expit(eta) if spec.outcome_family == BERNOULLI else eta


def density_y(y, x, z, u, theta: Theta, sp: SensitivityPoint, spec: ModelSpec = ModelSpec()):
    return np.exp(log_density_outcome(y, eta_outcome(theta, x, z, u, sp), spec, theta.sigma))


def density_z(z, x, u, theta: Theta, sp: SensitivityPoint):
    return np.exp(log_density_treatment(z, eta_propensity(theta, x, u, sp)))


def log_joint_density(y, z, x, u, theta: Theta, sp: SensitivityPoint, spec: ModelSpec = ModelSpec()):
    return (log_density_outcome(y, eta_outcome(theta, x, z, u, sp), spec, theta.sigma)
            + log_density_treatment(z, eta_propensity(theta, x, u, sp)))


def joint_density(y, z, x, u, theta: Theta, sp: SensitivityPoint, spec: ModelSpec = ModelSpec()):
    """``f(y | x, z, u) f(z | x, u)``."""
    return np.exp(log_joint_density(y, z, x, u, theta, sp, spec))


def log_mixture_density(y, z, x, theta, sp, prior: WorkingPrior, spec: ModelSpec = ModelSpec()):
    """``log sum_k pi_k f(y, z | x, u_k)`` broadcast over leading axes."""
    u = prior.support
    x = np.asarray(x, dtype=float)
    lj = log_joint_density(np.asarray(y, dtype=float)[..., None], np.asarray(z, dtype=float)[..., None],
                           x[..., None, :], u, theta, sp, spec)
    return logsumexp(lj + prior.log_weights, axis=-1)
