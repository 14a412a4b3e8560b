import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semisens import SensitivityPoint, bernoulli_prior, weights_prior
from semisens.errors import SemisensError
from semisens.ident import (IdentifiedParams, ObservedCells, conditional_law, identify, logistic_cells,
                            loglinear_cells, loglinear_from_logistic, mgf)

coef = st.floats(-3, 3, allow_nan=False)


@given(coef, coef, coef, coef, coef, st.floats(0.05, 0.95))
@settings(max_examples=100, deadline=None)
def test_logistic_model_roundtrip(b0, bz, k0, d, g, p):
    sp = SensitivityPoint(d, g)
    pr = bernoulli_prior(p)
    params, g_ll, cond = loglinear_from_logistic(b0, bz, k0, pr, sp)
    # the log-linear form reproduces the logistic cells exactly
    np.testing.assert_allclose(loglinear_cells(params, cond, SensitivityPoint(d, g_ll)).L,
                               logistic_cells(b0, bz, k0, pr, sp).L, atol=1e-14)
    est = identify(logistic_cells(b0, bz, k0, pr, sp), cond, SensitivityPoint(d, g_ll))
    assert est.beta0 == pytest.approx(b0, abs=1e-10)
    assert est.beta_z == pytest.approx(bz, abs=1e-10)
    assert est.alpha0 == pytest.approx(params.alpha0, abs=1e-10)


@given(coef, coef, coef, coef, coef)
@settings(max_examples=50, deadline=None)
def test_loglinear_roundtrip_with_three_point_law(a0, b0, bz, d, g):
    pr = weights_prior([-1.0, 0.0, 2.0], [0.3, 0.5, 0.2])
    params = IdentifiedParams(a0, b0, bz)
    sp = SensitivityPoint(d, g)
    est = identify(loglinear_cells(params, pr, sp), pr, sp)
    np.testing.assert_allclose([est.alpha0, est.beta0, est.beta_z], [a0, b0, bz], atol=1e-10)


def test_no_confounding_gives_log_odds_ratio():
    L = np.array([[0.3, 0.2], [0.1, 0.4]])
    est = identify(ObservedCells(L), bernoulli_prior(0.5), SensitivityPoint(0, 0))
    assert est.beta_z == pytest.approx(math.log(0.4 * 0.3 / (0.2 * 0.1)))
    assert est.beta0 == pytest.approx(math.log(0.1 / 0.3))
    assert est.alpha0 == pytest.approx(math.log(0.2 / 0.3))


def test_conditional_law_is_bayes():
    pr = bernoulli_prior(0.3)
    sp = SensitivityPoint(1.0, -0.5)
    law = conditional_law(0.2, 0.5, -0.1, pr, sp)
    # P(Y=0, Z=0 | u) for u = 0, 1
    lik = np.array([1 / (1 + math.exp(0.2 + u)) / (1 + math.exp(-0.1 - 0.5 * u)) for u in (0.0, 1.0)])
    want = lik * pr.weights
    np.testing.assert_allclose(law.weights, want / want.sum(), rtol=1e-13)


def test_boundary_and_overflow():
    with pytest.raises(SemisensError, match="boundary likelihood"):
        identify(ObservedCells(np.array([[0.5, 0.5], [0.0, 0.0]])), bernoulli_prior(0.5),
                 SensitivityPoint(0, 0))
    with pytest.raises(SemisensError, match="overflow"):
        mgf(weights_prior([0.0, 10.0], [0.5, 0.5]), 1e3)
    with pytest.raises(ValueError):
        mgf(bernoulli_prior(0.5), math.inf)


def test_cells_validation():
    with pytest.raises(ValueError, match="sum"):
        ObservedCells(np.array([[0.3, 0.3], [0.3, 0.3]]))
    with pytest.raises(ValueError):
        ObservedCells(np.array([[-0.1, 0.5], [0.3, 0.3]]))
    c = ObservedCells.from_counts([0, 0, 1, 1, 1], [0, 1, 0, 1, 1])
    np.testing.assert_allclose(c.L, [[0.2, 0.2], [0.2, 0.4]])
    with pytest.raises(ValueError, match="two-point"):
        loglinear_from_logistic(0, 0, 0, weights_prior([0, 1, 2], [1, 1, 1]), SensitivityPoint(1, 1))
