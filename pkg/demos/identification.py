"""Closed-form identification from a 2 x 2 table.

Without covariates, a binary U, and a known law of U given (Y = 0, Z = 0),
the four cell probabilities P(Y = y, Z = z) determine the outcome intercept
and treatment effect exactly. This demo builds the table from a logistic
model, inverts it, and shows how the answer moves with the assumed strength
of confounding.

Run with ``python3 demos/identification.py``.
"""

import numpy as np

from semisens import SensitivityPoint, bernoulli_prior
from semisens.ident import identify, logistic_cells, loglinear_from_logistic

beta0, beta_z, kappa0 = -0.5, 1.0, 0.2
prior = bernoulli_prior(0.3)
truth = SensitivityPoint(1.0, 1.0)

cells = logistic_cells(beta0, beta_z, kappa0, prior, truth)
print("P(Y = y, Z = z):")
print(np.array2string(cells.L, precision=4))

for d in (0.0, 0.5, 1.0, 1.5):
    sp = SensitivityPoint(d, d)
    _, gamma_ll, cond = loglinear_from_logistic(beta0, beta_z, kappa0, prior, sp)
    est = identify(cells, cond, SensitivityPoint(d, gamma_ll))
    mark = "  <- true strength" if d == truth.delta else ""
    print(f"delta = gamma = {d:.1f}: beta_z = {est.beta_z:7.4f}{mark}")
