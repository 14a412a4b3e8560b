"""EM maximum likelihood treating a binary U as a missing covariate.

``P(U = 1) = p`` is fixed by the user and never updated, so the fit answers
"what if U were Bernoulli(p)". Only binary outcome and treatment are handled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConvergenceError, SemisensError
from .estimator import FitResult, fd_jacobian
from .glm import logistic_irls, primary_fit
from .model import BERNOULLI, Dataset, ModelSpec, SensitivityPoint, Theta, bernoulli_prior
from .score import grid_terms, observed_score_from_terms


@dataclass(frozen=True)
class EmOptions:
    p: float = 0.5
    max_iter: int = 500
    tol: float = 1e-8
    init: Theta | None = None
    hess_step: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")


@dataclass
class EmResult(FitResult):
    loglik_trace: list[float] = field(default_factory=list)
    responsibilities: np.ndarray | None = None


def _terms(data: Dataset, theta: Theta, sp: SensitivityPoint, p: float):
    y, z = data.y[:, None], data.z[:, None]
    return grid_terms(y, z, data.X, theta, sp, bernoulli_prior(p))


def observed_loglik(data: Dataset, theta: Theta, sp: SensitivityPoint, p: float) -> float:
    return float(_terms(data, theta, sp, p).log_istar.sum())


def observed_scores(data: Dataset, theta: Theta, sp: SensitivityPoint, p: float) -> np.ndarray:
    """Per-observation gradient of the observed-data log-likelihood, (n, q)."""
    y, z = data.y[:, None], data.z[:, None]
    t = _terms(data, theta, sp, p)
    return observed_score_from_terms(y, z, data.X, t, theta, ModelSpec())[:, 0, :]


def responsibilities(data: Dataset, theta: Theta, sp: SensitivityPoint, p: float) -> np.ndarray:
    """``P(U_i = 1 | y_i, z_i, x_i)`` under the working Bernoulli(p) law."""
    return _terms(data, theta, sp, p).post[:, 0, 1]


def m_step(data: Dataset, r: np.ndarray, sp: SensitivityPoint, init: Theta) -> Theta:
    """Weighted logistic fits on the dataset duplicated over ``u in {0, 1}``."""
    n = data.n
    X2 = np.vstack([data.X, data.X])
    u = np.repeat([0.0, 1.0], n)
    w = np.concatenate([1.0 - r, r])
    design = np.column_stack([X2, np.tile(data.z, 2)])
    out = logistic_irls(design, np.tile(data.y, 2), w, sp.delta * u,
                        init=np.append(init.lam, init.beta))
    kappa = logistic_irls(X2, np.tile(data.z, 2), w, sp.gamma * u, init=init.kappa)
    return Theta(out[:-1], out[-1], kappa)


def em_fit(data: Dataset, sp: SensitivityPoint, opts: EmOptions = EmOptions(),
           spec: ModelSpec = ModelSpec(), level: float = 0.95) -> EmResult:
    """EM iterations to log-likelihood convergence, then Hessian-based SEs."""
    if spec.outcome_family != BERNOULLI:
        raise ValueError("EM comparator supports a binary outcome only")
    data.check_family(spec)
    p = opts.p
    theta = opts.init if opts.init is not None else primary_fit(data, spec)
    ll = observed_loglik(data, theta, sp, p)
    trace = [ll]
    converged = False
    it = 0
    while it < opts.max_iter:
        it += 1
        r = responsibilities(data, theta, sp, p)
        theta = m_step(data, r, sp, theta)
        ll_new = observed_loglik(data, theta, sp, p)
        trace.append(ll_new)
        if ll_new < ll - 1e-10 * max(1.0, abs(ll)):
            raise SemisensError(
                f"EM log-likelihood decreased at iteration {it}: {ll:.12g} -> {ll_new:.12g}")
        done = ll_new - ll < opts.tol
        ll = ll_new
        if done:
            converged = True
            break

    v = theta.vector()
    pp = data.p

    def grad(vec):
        return observed_scores(data, Theta.from_vector(vec, pp), sp, p).mean(axis=0)

    scores = observed_scores(data, theta, sp, p)
    J = fd_jacobian(grad, v, opts.hess_step)
    J = 0.5 * (J + J.T)
    try:
        Jinv = np.linalg.inv(J)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("observed information is singular at the EM solution") from exc
    vcov = -Jinv / data.n
    vcov = 0.5 * (vcov + vcov.T)
    influence = -scores @ Jinv.T
    g = float(np.max(np.abs(scores.mean(axis=0))))
    msg = "" if converged else f"no convergence after {opts.max_iter} iterations"
    return EmResult(sp, theta, vcov, level, scores, influence, J, it, converged, g, msg,
                    trace, responsibilities(data, theta, sp, p))
