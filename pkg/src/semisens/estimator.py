"""Efficient-score estimating equations for ``theta = (lambda, beta, kappa)``.

The estimator solves ``mean_i S_eff(O_i; theta) = 0`` by damped Newton steps with
a central finite-difference Jacobian, starting from the primary analysis at
``(delta, gamma) = (0, 0)``. Standard errors use the sandwich
``J^{-1} M J^{-T} / n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import root
from scipy.stats import norm

from .errors import ConvergenceError, JacobianSingularError, SemisensError
from .fredholm import build_system, solve_exact, solve_tikhonov
from .glm import primary_fit
from .model import Dataset, ModelSpec, SensitivityPoint, Theta, WorkingPrior, bernoulli_prior
from .quadrature import DEFAULT_HERMITE_ORDER
from .score import full_score, grid_terms, observed_score_from_terms


@dataclass(frozen=True)
class FitOptions:
    prior: WorkingPrior = field(default_factory=lambda: bernoulli_prior(0.5))
    alpha: float = 0.1
    solver: str = "auto"        # auto | exact | tikhonov
    rule: str = "auto"          # auto | trapezoid | mass
    max_iter: int = 100
    tol: float = 1e-8
    fd_step: float = 1e-5
    init: Theta | None = None
    damping: int = 20
    sigma: float = 1.0
    hermite_order: int = DEFAULT_HERMITE_ORDER

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.solver not in ("auto", "exact", "tikhonov"):
            raise ValueError(f"unknown solver {self.solver!r}")

    def use_exact(self) -> bool:
        if self.solver == "auto":
            return not self.prior.continuous
        return self.solver == "exact"


@dataclass
class FitResult:
    sp: SensitivityPoint
    theta_hat: Theta
    vcov: np.ndarray
    level: float
    scores: np.ndarray
    influence: np.ndarray
    jacobian: np.ndarray
    iterations: int
    converged: bool
    final_norm: float
    message: str = ""

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def beta_hat(self) -> float:
        return self.theta_hat.beta

    @property
    def beta_se(self) -> float:
        i = self.theta_hat.beta_index
        return float(math.sqrt(max(self.vcov[i, i], 0.0)))

    @property
    def ci(self) -> tuple[float, float]:
        return wald_ci(self.beta_hat, self.beta_se, self.level)

    def to_dict(self, include_influence: bool = False) -> dict:
        lo, hi = self.ci
        out = {
            "delta": self.sp.delta,
            "gamma": self.sp.gamma,
            "beta_hat": self.beta_hat,
            "se": self.beta_se,
            "ci_lo": lo,
            "ci_hi": hi,
            "level": self.level,
            "n": self.n,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_norm": self.final_norm,
            "theta": dict(zip(self.theta_hat.names(), self.theta_hat.vector().tolist())),
            "sigma": self.theta_hat.sigma,
            "vcov": self.vcov.tolist(),
        }
        if include_influence:
            out["influence_beta"] = self.influence[:, self.theta_hat.beta_index].tolist()
        return out


def wald_ci(est: float, se: float, level: float) -> tuple[float, float]:
    zq = float(norm.ppf(0.5 + level / 2.0))
    return float(est - zq * se), float(est + zq * se)


def efficient_score(data: Dataset, theta: Theta, sp: SensitivityPoint, opts: FitOptions,
                    spec: ModelSpec = ModelSpec()) -> np.ndarray:
    """Per-observation efficient scores, shape (n, q)."""
    if sp.is_null:
        # the correction vanishes: b == 0 so a == 0
        return full_score(data.y, data.z, data.X, 0.0, theta, sp, spec)
    prior = opts.prior
    system = build_system(data.X, theta, sp, prior, spec, alpha=opts.alpha, rule=opts.rule,
                          order=opts.hermite_order)
    cf = solve_exact(system) if opts.use_exact() else solve_tikhonov(system)
    y, z = data.y[:, None], data.z[:, None]
    terms = grid_terms(y, z, data.X, theta, sp, prior, spec)
    s_obs = observed_score_from_terms(y, z, data.X, terms, theta, spec)[:, 0, :]
    return s_obs - np.einsum("nk,nkq->nq", terms.post[:, 0, :], cf.a)


def fd_jacobian(fun, v, rel_step=1e-5):
    """Central-difference Jacobian with step ``rel_step * max(1, |v_j|)``."""
    v = np.asarray(v, dtype=float)
    cols = []
    for j in range(v.size):
        hj = rel_step * max(1.0, abs(v[j]))
        e = np.zeros_like(v)
        e[j] = hj
        cols.append((fun(v + e) - fun(v - e)) / (2.0 * hj))
    return np.column_stack(cols)


def sandwich_variance(scores, jacobian, n: int | None = None) -> np.ndarray:
    """``J^{-1} M J^{-T} / n`` with ``M = scores' scores / n``."""
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0] if n is None else n
    jinv = _inverse(jacobian)
    meat = scores.T @ scores / n
    v = jinv @ meat @ jinv.T / n
    return 0.5 * (v + v.T)


def _inverse(J):
    J = np.asarray(J, dtype=float)
    if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
        raise JacobianSingularError("Jacobian singular at theta-hat")
    return np.linalg.inv(J)


def _check_data(data: Dataset, spec: ModelSpec):
    data.check_family(spec)
    if data.z.min() == data.z.max():
        raise ValueError("both treatment arms must be present")
    if np.linalg.matrix_rank(data.X) < data.p:
        raise ValueError("covariate matrix is not of full column rank")


STALL_WINDOW = 10


def fit(data: Dataset, sp: SensitivityPoint, opts: FitOptions = FitOptions(),
        spec: ModelSpec = ModelSpec(), level: float = 0.95) -> FitResult:
    """Solve the efficient-score equations at fixed ``(delta, gamma)``."""
    _check_data(data, spec)
    p = data.p
    sigma = opts.sigma

    def G(v):
        th = Theta.from_vector(v, p, sigma)
        return efficient_score(data, th, sp, opts, spec).mean(axis=0)

    if opts.init is not None:
        v = np.array(opts.init.vector(), dtype=float)
    else:
        v = primary_fit(data, spec, sigma).vector()
    v0 = v.copy()
    g = G(v)
    gnorm = float(np.max(np.abs(g)))
    converged = gnorm <= opts.tol
    it = 0
    message = ""
    checkpoint = gnorm
    while not converged and it < opts.max_iter:
        it += 1
        if it % STALL_WINDOW == 0:
            # Newton converges fast near a root; a slow crawl means it is
            # following a valley away from one
            if gnorm > 0.5 * checkpoint:
                message = f"Newton stalled at iteration {it}"
                break
            checkpoint = gnorm
        J = fd_jacobian(G, v, opts.fd_step)
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -g, rcond=None)[0]
        base = float(np.linalg.norm(g))
        t = 1.0
        accepted = False
        for _ in range(opts.damping + 1):
            v_new = v + t * step
            try:
                g_new = G(v_new)
            except (SemisensError, FloatingPointError):
                g_new = None
            if g_new is not None and np.all(np.isfinite(g_new)) and np.linalg.norm(g_new) < base:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            message = f"line search failed at iteration {it}"
            break
        v, g = v_new, g_new
        gnorm = float(np.max(np.abs(g)))
        converged = gnorm <= opts.tol
    if not converged:
        message = message or f"no convergence after {opts.max_iter} iterations"
        # weak identification can make plain Newton wander off; retry from the
        # starting point with MINPACK's hybrid and Levenberg-Marquardt solvers
        v, g, it, converged, message = _fallback(G, v0, v, g, it, opts.tol, message)
        gnorm = float(np.max(np.abs(g)))

    theta_hat = Theta.from_vector(v, p, sigma)
    scores = efficient_score(data, theta_hat, sp, opts, spec)
    J = fd_jacobian(G, v, opts.fd_step)
    try:
        vcov = sandwich_variance(scores, J, data.n)
        influence = -scores @ np.linalg.inv(J).T
    except JacobianSingularError:
        if converged:
            raise
        vcov = np.full((v.size, v.size), np.nan)
        influence = np.full_like(scores, np.nan)
    return FitResult(sp, theta_hat, vcov, level, scores, influence, J, it, converged, gnorm, message)


def _fallback(G, v0, v_best, g_best, it, tol, message):
    def safe(vec):
        try:
            out = G(vec)
        except SemisensError:
            return np.full(vec.shape, 1e6)
        return np.where(np.isfinite(out), out, 1e6)

    budget = 60 * (v0.size + 1)
    for method, opts in (("hybr", {"xtol": 1e-13, "maxfev": budget}),
                         ("lm", {"xtol": 1e-13, "ftol": 1e-15, "maxiter": budget})):
        sol = root(safe, v0, method=method, options=opts)
        it += int(sol.get("nfev", 0))
        try:
            g = G(sol.x)
        except SemisensError:
            continue
        if np.all(np.isfinite(g)) and np.max(np.abs(g)) < np.max(np.abs(g_best)):
            v_best, g_best = sol.x, g
        if np.max(np.abs(g_best)) <= tol:
            return v_best, g_best, it, True, f"{message}; converged with {method} fallback"
    return v_best, g_best, it, False, f"{message}; fallback solvers did not reach tol"


@dataclass
class SweepRow:
    delta: float
    gamma: float
    beta_hat: float
    se: float
    ci_lo: float
    ci_hi: float
    converged: bool
    error: str = ""


@dataclass
class SweepResult:
    rows: list[SweepRow]
    fits: list[FitResult | None]


def _nearest(done: list[tuple[SensitivityPoint, FitResult]], sp: SensitivityPoint):
    best, best_d = None, math.inf
    for other, res in done:
        d = math.hypot(other.delta - sp.delta, other.gamma - sp.gamma)
        if d < best_d:
            best, best_d = res, d
    return best


def sweep(data: Dataset, grid, opts: FitOptions = FitOptions(), spec: ModelSpec = ModelSpec(),
          level: float = 0.95, warm_start: bool = True) -> SweepResult:
    """Fit at every sensitivity point, in input order."""
    grid = list(grid)
    if not grid:
        raise ValueError("sensitivity grid is empty")
    done = []
    starts = {}

    def attempt(i, sp):
        o = opts
        near = _nearest(done, sp) if warm_start else None
        starts[i] = near
        if near is not None:
            o = replace(opts, init=near.theta_hat)
        try:
            res = fit(data, sp, o, spec, level)
        except (SemisensError, ValueError, np.linalg.LinAlgError) as exc:
            return SweepRow(sp.delta, sp.gamma, math.nan, math.nan, math.nan, math.nan, False, str(exc)), None
        lo, hi = res.ci
        if res.converged:
            done.append((sp, res))
        return SweepRow(sp.delta, sp.gamma, res.beta_hat, res.beta_se, lo, hi, res.converged,
                        res.message), res

    rows, fits = map(list, zip(*(attempt(i, sp) for i, sp in enumerate(grid))))
    if warm_start:
        # a failed point gets one retry when a closer converged solution has
        # appeared since its first attempt
        for i, sp in enumerate(grid):
            if not rows[i].converged and _nearest(done, sp) not in (None, starts[i]):
                row, res = attempt(i, sp)
                if row.converged:
                    rows[i], fits[i] = row, res
    return SweepResult(rows, fits)


@dataclass
class TippingPoint:
    t_star: float | None
    below: FitResult | None     # last point whose CI excludes zero
    above: FitResult | None     # first point whose CI covers zero


def _covers_zero(res: FitResult) -> bool:
    lo, hi = res.ci
    return lo <= 0.0 <= hi


def tipping_point(data: Dataset, T: float, opts: FitOptions = FitOptions(),
                  spec: ModelSpec = ModelSpec(), level: float = 0.95,
                  resolution: float = 0.01) -> TippingPoint:
    """Smallest ``t`` on the path ``delta = gamma = t`` whose CI covers zero.

    Bisection assumes coverage switches once along ``[0, T]``.
    """
    failing = []
    cache: dict[float, FitResult] = {}

    def at(t, init=None):
        res = fit(data, SensitivityPoint(t, t), replace(opts, init=init), spec, level)
        if not res.converged:
            failing.append(t)
            raise ConvergenceError(f"fits did not converge at t = {failing}")
        cache[t] = res
        return res

    r0 = at(0.0)
    if _covers_zero(r0):
        return TippingPoint(0.0, None, r0)
    rT = at(float(T), r0.theta_hat)
    if not _covers_zero(rT):
        return TippingPoint(None, rT, None)
    lo, hi = 0.0, float(T)
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        res = at(mid, cache[lo].theta_hat)
        if _covers_zero(res):
            hi = mid
        else:
            lo = mid
    return TippingPoint(hi, cache[lo], cache[hi])
