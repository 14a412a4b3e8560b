"""Semiparametric sensitivity analysis for an unmeasured confounder U."""

from .errors import (ConvergenceError, DegenerateLikelihoodError, DimensionError, IllPosedError,
                     JacobianSingularError, SemisensError, SeparationError)
from .estimator import FitOptions, FitResult, efficient_score, fit, sandwich_variance, sweep, tipping_point
from .model import (BERNOULLI, GAUSSIAN, Dataset, ModelSpec, SensitivityPoint, Theta, WorkingPrior,
                    bernoulli_prior, grid_prior, parse_prior, weights_prior)

__version__ = "0.1.0"
