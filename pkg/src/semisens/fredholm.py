"""Per-observation integral equation for the nuisance correction ``a(u, x)``.

For each covariate row the correction solves

    int a(u', x) K(u', u, x) du' = b(u, x)

which after discretization on the working-prior grid reads ``h K^T W a = b``.
Arrays carry any number of leading observation axes; the last two axes of the
kernel are ``(u', u)`` and the forcing matrix is ``(u, score component)``.

Discrete priors (e.g. a Bernoulli U) use point masses, ``h = 1`` and ``W = I``,
which makes the system exact. Grid priors stand in for a continuous law: the
kernel uses the density ``pi_k / h`` and ``W`` holds trapezoid weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllPosedError
from .model import ModelSpec, SensitivityPoint, Theta, WorkingPrior
from .quadrature import DEFAULT_HERMITE_ORDER, expectation_cells, trapezoid
from .score import grid_terms, observed_score_from_terms

COND_LIMIT = 1e10


@dataclass
class FredholmSystem:
    grid: np.ndarray
    kernel: np.ndarray          # (..., K, K), entry [i, j] = K(u'_i, u_j, x)
    weights: np.ndarray         # (K,) diagonal of W
    forcing: np.ndarray         # (..., K, q)
    h: float = 1.0
    alpha: float = 0.0
    # cell-level pieces kept for orthogonality checks
    cell_weights: np.ndarray | None = None
    cell_posterior: np.ndarray | None = None
    cell_scores: np.ndarray | None = None

    @property
    def operator(self) -> np.ndarray:
        """``h K^T W`` with shape (..., K, K)."""
        return self.h * np.swapaxes(self.kernel, -1, -2) * self.weights

    def with_alpha(self, alpha: float) -> "FredholmSystem":
        return FredholmSystem(self.grid, self.kernel, self.weights, self.forcing, self.h, alpha,
                              self.cell_weights, self.cell_posterior, self.cell_scores)


@dataclass
class CorrectionFunction:
    a: np.ndarray               # (..., K, q) pivotal values
    residual_norm: np.ndarray   # (...) Frobenius norm of h K^T W a - b
    method: str


def quadrature_scheme(prior: WorkingPrior, rule: str = "auto"):
    """Return ``(h, W, density_scale)`` for the discretized equation.

    ``rule="auto"`` picks trapezoid for grid priors and point masses otherwise;
    ``"trapezoid"`` and ``"mass"`` force either scheme.
    """
    K = prior.size
    if rule == "auto":
        rule = "trapezoid" if prior.continuous and K > 1 else "mass"
    if rule == "mass":
        return 1.0, np.ones(K), 1.0
    if rule == "trapezoid":
        if K < 2:
            raise ValueError("trapezoid rule needs at least two grid points")
        h = prior.mesh if prior.mesh is not None else float(np.diff(prior.support).mean())
        return h, trapezoid(K - 1).weights, h
    raise ValueError(f"unknown quadrature rule {rule!r}")


def build_system(x, theta: Theta, sp: SensitivityPoint, prior: WorkingPrior,
                 spec: ModelSpec = ModelSpec(), alpha: float = 0.0, rule: str = "auto",
                 order: int = DEFAULT_HERMITE_ORDER) -> FredholmSystem:
    """Assemble kernel and forcing for one covariate row ``(p,)`` or a batch ``(n, p)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    y, z, omega = expectation_cells(X, theta, sp, prior, spec, order)
    terms = grid_terms(y, z, X, theta, sp, prior, spec)
    S = observed_score_from_terms(y, z, X, terms, theta, spec)             # (n, C, q)
    h, W, dens = quadrature_scheme(prior, rule)
    kernel = np.einsum("ncj,nck->nkj", omega, terms.post) / dens
    forcing = np.einsum("ncj,ncq->njq", omega, S)
    if single:
        kernel, forcing = kernel[0], forcing[0]
        omega, post, S = omega[0], terms.post[0], S[0]
    else:
        post = terms.post
    return FredholmSystem(prior.support, kernel, W, forcing, h, alpha, omega, post, S)


def build_kernel(x, theta, sp, prior, spec: ModelSpec = ModelSpec(), rule="auto",
                 order=DEFAULT_HERMITE_ORDER):
    return build_system(x, theta, sp, prior, spec, rule=rule, order=order).kernel


def build_forcing(x, theta, sp, prior, spec: ModelSpec = ModelSpec(), order=DEFAULT_HERMITE_ORDER):
    return build_system(x, theta, sp, prior, spec, order=order).forcing


def _residual(A, a, b):
    return np.linalg.norm(A @ a - b, axis=(-2, -1))


def solve_exact(system: FredholmSystem, cond_limit: float = COND_LIMIT) -> CorrectionFunction:
    """Direct solve of ``h K^T W a = b``; refuses ill-conditioned systems."""
    A = system.operator
    b = system.forcing
    if not np.any(b):
        return CorrectionFunction(np.zeros_like(b), np.zeros(b.shape[:-2]), "exact")
    cond = np.linalg.cond(A)
    if np.any(~(cond < cond_limit)):
        worst = float(np.max(np.where(np.isfinite(cond), cond, np.inf)))
        raise IllPosedError(f"ill-posed; use tikhonov (condition estimate {worst:.3g})")
    a = np.linalg.solve(A, b)
    return CorrectionFunction(a, _residual(A, a, b), "exact")


def solve_tikhonov(system: FredholmSystem, alpha: float | None = None) -> CorrectionFunction:
    """Ridge solution ``(A^T A + alpha I)^{-1} A^T b`` with ``A = h K^T W``."""
    alpha = system.alpha if alpha is None else alpha
    if not alpha > 0:
        raise ValueError(f"Tikhonov regularization needs alpha > 0, got {alpha}")
    A = system.operator
    b = system.forcing
    At = np.swapaxes(A, -1, -2)
    G = At @ A + alpha * np.eye(A.shape[-1])
    a = np.linalg.solve(G, At @ b)
    return CorrectionFunction(a, _residual(A, a, b), "tikhonov")


@dataclass
class PicardReport:
    singular_values: np.ndarray
    condition: float
    capture_fraction: float
    threshold: float


def picard_diagnostics(system: FredholmSystem) -> PicardReport:
    """Singular spectrum of ``h K^T W`` and the share of ``||b||^2`` it can resolve.

    Only one covariate row is diagnosed at a time. Directions with singular value
    at or below ``sqrt(alpha)`` count as unresolved.
    """
    A = system.operator
    if A.ndim != 2:
        raise ValueError("picard_diagnostics expects a single (unbatched) system")
    U, s, _ = np.linalg.svd(A)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
    b = system.forcing
    total = float(np.sum(b * b))
    thr = float(np.sqrt(system.alpha)) if system.alpha > 0 else 0.0
    if total == 0.0:
        frac = 1.0
    else:
        proj = U.T @ b
        keep = s > max(thr, s[0] * np.finfo(float).eps * A.shape[0])
        frac = float(np.sum(proj[keep] ** 2) / total)
    return PicardReport(s, cond, frac, thr)


def correction_expectation(cf: CorrectionFunction, y, z, x, theta, sp, prior: WorkingPrior,
                           spec: ModelSpec = ModelSpec()):
    """Posterior mean ``E*[a(U, x) | x, z, y]`` on the working grid."""
    from .score import posterior_weights

    a = cf.a
    if a.shape[-2] != prior.size:
        raise ValueError(f"correction grid has {a.shape[-2]} points but the prior has {prior.size}")
    post = posterior_weights(y, z, x, theta, sp, prior, spec)
    return np.einsum("...k,...kq->...q", post, a)


def orthogonality_defect(system: FredholmSystem, cf: CorrectionFunction) -> np.ndarray:
    """``E[S_obs - E*[a | x, z, y] | x, u_j]`` for every grid point; shape (..., K, q)."""
    corr = np.einsum("...ck,...kq->...cq", system.cell_posterior, cf.a)
    resid = system.cell_scores - corr
    return np.einsum("...cj,...cq->...jq", system.cell_weights, resid)
