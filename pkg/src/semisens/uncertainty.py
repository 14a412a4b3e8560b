"""Uniform confidence bands over a grid of sensitivity points, and Rubin's
rules for pooling fits across imputations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import SemisensError
from .model import SensitivityPoint

DRAW_CHUNK = 1000


@dataclass
class BandResult:
    grid: list[SensitivityPoint]
    beta: np.ndarray
    v: np.ndarray
    c_hat: float
    band: np.ndarray            # (G, 2)
    B: int
    seed: int
    level: float
    statistic: str = "influence"

    def rows(self):
        for sp, b, v, (lo, hi) in zip(self.grid, self.beta, self.v, self.band):
            yield sp, float(b), float(v), float(lo), float(hi)


def _columns(fits, statistic: str):
    if statistic == "influence":
        return np.column_stack([f.influence[:, f.theta_hat.beta_index] for f in fits])
    if statistic == "raw":
        return np.column_stack([f.scores[:, f.theta_hat.beta_index] for f in fits])
    raise ValueError(f"unknown band statistic {statistic!r}")


def multiplier_sup(psi, scale, B: int, seed: int) -> np.ndarray:
    """``B`` draws of ``max_g |sum_i eps_i psi_ig| / scale_g`` with N(0, 1) multipliers.

    Draws are produced in fixed-size chunks from one stream, so the result
    depends only on ``(psi, scale, B, seed)``.
    """
    psi = np.asarray(psi, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = np.empty(B)
    for start in range(0, B, DRAW_CHUNK):
        m = min(DRAW_CHUNK, B - start)
        eps = rng.standard_normal((m, psi.shape[0]))
        out[start:start + m] = np.max(np.abs(eps @ psi) / scale, axis=1)
    return out


def uniform_band(fits, level: float = 0.95, B: int = 1000, seed: int = 0,
                 statistic: str = "influence") -> BandResult:
    """Simultaneous band ``beta_hat +- c_hat * se`` over all grid points.

    ``statistic="influence"`` perturbs the beta coordinate of the influence
    values, which makes each coordinate of the sup asymptotically standard
    normal. ``"raw"`` perturbs the beta component of the efficient score and is
    kept only for comparison.
    """
    fits = list(fits)
    if not fits:
        raise ValueError("no fits supplied")
    if B < 100:
        raise ValueError("insufficient draws: B must be at least 100")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    bad = [f.sp for f in fits if f is None or not f.converged]
    if bad:
        raise SemisensError(f"band needs converged fits; failed at {bad}")
    n = fits[0].n
    if any(f.n != n for f in fits):
        raise ValueError("all fits must use the same observations")
    beta = np.array([f.beta_hat for f in fits])
    v = np.array([f.beta_se ** 2 for f in fits])
    psi = _columns(fits, statistic)
    if statistic == "influence":
        scale = n * np.sqrt(v)
    else:
        scale = math.sqrt(n) * np.sqrt(v)
    if np.any(~(scale > 0)):
        raise SemisensError("zero variance at some grid point")
    sup = multiplier_sup(psi, scale, B, seed)
    c_hat = float(np.quantile(sup, level))
    half = c_hat * np.sqrt(v)
    band = np.column_stack([beta - half, beta + half])
    return BandResult([f.sp for f in fits], beta, v, c_hat, band, B, seed, level, statistic)


@dataclass
class PooledEstimate:
    beta: float
    se: float
    ci: tuple[float, float]
    within: float
    between: float
    total: float
    m: int


def rubin_pool(estimates, level: float = 0.95) -> PooledEstimate:
    """Pool ``(beta_m, se_m)`` pairs from ``m >= 2`` imputations."""
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    m = est.shape[0]
    if m < 2:
        raise ValueError("Rubin's rules need at least two imputations")
    bar = float(est[:, 0].mean())
    W = float(np.mean(est[:, 1] ** 2))
    Bv = float(est[:, 0].var(ddof=1))
    T = W + (1.0 + 1.0 / m) * Bv
    se = math.sqrt(T)
    zq = norm.ppf(0.5 + level / 2.0)
    return PooledEstimate(bar, se, (bar - zq * se, bar + zq * se), W, Bv, T, m)
