"""Data-generating designs and a Monte Carlo harness with bias, coverage and
RMSE summaries.

Every replication draws from its own stream,
``SeedSequence(seed, spawn_key=(r,))``, so replication ``r`` can be rerun on
its own. Results are reduced in replication order, so the summary does not
depend on the worker count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .em import EmOptions, em_fit
from .errors import SemisensError
from .estimator import FitOptions, fit
from .model import BERNOULLI, GAUSSIAN, Dataset, ModelSpec, SensitivityPoint, WorkingPrior
from .model import bernoulli_prior, grid_prior

KINDS = ("binary_u", "beta_u", "dependent_beta_u", "dependent_normal_u", "gaussian_y")

# (outcome U coefficient, treatment U coefficient) for each design
_STRENGTH = {
    "binary_u": (4.0, 4.0),
    "beta_u": (2.0, 2.0),
    "dependent_beta_u": (2.0, 2.0),
    "dependent_normal_u": (2.0, 2.0),
    "gaussian_y": (4.0, 4.0),
}
NORMAL_NOISE_SD = 0.1


@dataclass(frozen=True)
class DgpSpec:
    kind: str
    n: int
    seed: int = 0
    true_beta: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown design {self.kind!r}; choose from {KINDS}")
        if self.n < 50:
            raise ValueError("n must be at least 50")

    @property
    def sp(self) -> SensitivityPoint:
        d, g = _STRENGTH[self.kind]
        return SensitivityPoint(d, g)

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(GAUSSIAN if self.kind == "gaussian_y" else BERNOULLI)


def replication_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))


def generate(dgp: DgpSpec, rng: np.random.Generator | None = None):
    """Draw one dataset; returns ``(Dataset, u)`` with the hidden confounder."""
    rng = np.random.default_rng(dgp.seed) if rng is None else rng
    n = dgp.n
    x1 = rng.uniform(size=n)
    x2 = rng.uniform(size=n)
    kind = dgp.kind
    if kind in ("binary_u", "gaussian_y"):
        u = (rng.uniform(size=n) < 0.2).astype(float)
    elif kind == "beta_u":
        u = rng.beta(2.0, 2.0, size=n)
    elif kind == "dependent_beta_u":
        u = x1 + rng.beta(2.0, 2.0, size=n)
    else:
        u = x1 + rng.normal(0.0, NORMAL_NOISE_SD, size=n)
    d, g = _STRENGTH[kind]
    z = (rng.uniform(size=n) < expit(3.0 * x1 - 3.0 * x2 + g * u)).astype(float)
    b = dgp.true_beta
    if kind == "gaussian_y":
        y = x1 + x2 + b * z + d * u + rng.normal(size=n)
    else:
        y = (rng.uniform(size=n) < expit(4.0 * x1 - 4.0 * x2 + b * z + d * u)).astype(float)
    X = np.column_stack([np.ones(n), x1, x2])
    return Dataset(y, z, X), u


@dataclass(frozen=True)
class SemiMethod:
    prior: WorkingPrior
    alpha: float = 0.1
    rule: str = "auto"
    name: str = "semi"

    def run(self, data, sp, spec, level):
        return fit(data, sp, FitOptions(prior=self.prior, alpha=self.alpha, rule=self.rule), spec, level)

    @property
    def h(self):
        return self.prior.mesh


@dataclass(frozen=True)
class EmMethod:
    p: float
    name: str = "em"
    alpha = None
    h = None

    def run(self, data, sp, spec, level):
        return em_fit(data, sp, EmOptions(p=self.p), spec, level)


@dataclass
class StudyMetrics:
    mean: float
    se: float
    abs_bias: float
    pct_bias: float
    coverage: float
    rmse: float
    reps: int
    failures: int = 0
    estimates: np.ndarray = field(default=None, repr=False)


def metrics(estimates, ses, cis, true_beta: float, failures: int = 0) -> StudyMetrics:
    """Monte Carlo summaries; SD uses ``ddof=0`` so ``rmse**2 = bias**2 + sd**2``."""
    est = np.asarray(estimates, dtype=float)
    cis = np.asarray(cis, dtype=float).reshape(-1, 2)
    if est.size == 0:
        raise ValueError("no estimates to summarize")
    if not (len(ses) == est.size == cis.shape[0]):
        raise ValueError("estimates, ses and cis must have equal lengths")
    mean = float(est.mean())
    sd = float(est.std())
    bias = abs(mean - true_beta)
    cover = float(np.mean((cis[:, 0] <= true_beta) & (true_beta <= cis[:, 1])))
    rmse = math.sqrt(bias ** 2 + sd ** 2)
    return StudyMetrics(mean, sd, bias, 100.0 * bias / abs(true_beta), cover, rmse, est.size,
                        failures, est)


def _one_rep(args):
    dgp, method, sp, level, seed, r = args
    data, _ = generate(dgp, replication_rng(seed, r))
    try:
        res = method.run(data, sp, dgp.spec, level)
    except (SemisensError, ValueError, np.linalg.LinAlgError):
        return None
    if not res.converged or not math.isfinite(res.beta_se):
        return None
    return res.beta_hat, res.beta_se, res.ci


def workers_from_env() -> int:
    try:
        return max(1, int(os.environ.get("SEMISENS_WORKERS", "1")))
    except ValueError:
        return 1


def run_study(dgp: DgpSpec, method, sp: SensitivityPoint | None = None, reps: int = 200,
              level: float = 0.95, seed: int = 0, workers: int | None = None,
              max_failure_rate: float = 0.2) -> StudyMetrics:
    """Repeat generate-and-fit ``reps`` times and summarize the estimates of beta."""
    if reps < 2:
        raise ValueError("reps must be at least 2")
    sp = dgp.sp if sp is None else sp
    workers = workers_from_env() if workers is None else workers
    jobs = [(dgp, method, sp, level, seed, r) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_one_rep, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        out = [_one_rep(j) for j in jobs]
    ok = [o for o in out if o is not None]
    failures = reps - len(ok)
    if failures > max_failure_rate * reps:
        raise SemisensError(f"design/method mismatch: {failures} of {reps} fits failed")
    est = [o[0] for o in ok]
    ses = [o[1] for o in ok]
    cis = [o[2] for o in ok]
    return metrics(est, ses, cis, dgp.true_beta, failures)


# --- design tables -----------------------------------------------------------

def design_cells(design: str, n: int | None = None, h: float | None = None):
    """``(kind, method, n)`` cells of a named study layout."""
    def ns(default):
        return default if n is None else [n]

    def hs(default):
        return default if h is None else [h]

    if design == "table1":
        methods = [EmMethod(0.5, "em_p0.5"), EmMethod(0.2, "em_p0.2"),
                   SemiMethod(bernoulli_prior(0.5), name="semi_p0.5"),
                   SemiMethod(bernoulli_prior(0.2), name="semi_p0.2")]
        return [("binary_u", m, k) for k in ns([300, 500, 1000]) for m in methods]
    if design == "table2":
        return [("beta_u", SemiMethod(grid_prior(0.0, 1.0, hh), name="semi_grid"), k)
                for k in ns([300, 500, 1000]) for hh in hs([0.5, 0.25, 0.2, 0.1])]
    if design == "table3":
        cells = [("dependent_beta_u", SemiMethod(grid_prior(0.0, 1.0, hh), name="semi_grid"), k)
                 for k in ns([200, 300, 500]) for hh in hs([0.2, 0.1])]
        cells += [("dependent_normal_u", SemiMethod(grid_prior(-0.4, 0.4, hh), name="semi_grid"), k)
                  for k in ns([200, 300, 500]) for hh in hs([0.1, 0.05])]
        return cells
    if design == "d2":
        return [("gaussian_y", SemiMethod(bernoulli_prior(p), name=f"semi_p{p}"), k)
                for k in ns([500]) for p in (0.2, 0.5)]
    raise ValueError(f"unknown design {design!r}")


CSV_COLUMNS = ["design", "method", "n", "h", "alpha", "prior", "reps", "failures",
               "mean", "se", "abs_bias", "pct_bias", "coverage", "rmse"]


def study_row(kind: str, method, n: int, m: StudyMetrics) -> dict:
    prior = getattr(method, "prior", None)
    return {
        "design": kind, "method": method.name, "n": n,
        "h": "" if method.h is None else repr(float(method.h)),
        "alpha": "" if method.alpha is None else repr(float(method.alpha)),
        "prior": prior.label if prior is not None else f"bernoulli:{method.p}",
        "reps": m.reps, "failures": m.failures,
        "mean": repr(m.mean), "se": repr(m.se), "abs_bias": repr(m.abs_bias),
        "pct_bias": repr(m.pct_bias), "coverage": repr(m.coverage), "rmse": repr(m.rmse),
    }


def write_csv(rows, fh):
    w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
