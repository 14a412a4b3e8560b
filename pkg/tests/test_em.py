import numpy as np
import pytest
import statsmodels.api as sm
from scipy.optimize import minimize
from statsmodels.tools.numdiff import approx_hess

from semisens import ModelSpec, SensitivityPoint, Theta
from semisens.em import EmOptions, em_fit, observed_loglik, observed_scores, responsibilities
from semisens.model import GAUSSIAN
from semisens.simstudy import DgpSpec, generate, replication_rng

SP = SensitivityPoint(1.5, 1.0)


@pytest.fixture(scope="module")
def data():
    d, _ = generate(DgpSpec("binary_u", 800), replication_rng(77, 0))
    return d


@pytest.fixture(scope="module")
def em(data):
    return em_fit(data, SP, EmOptions(p=0.3, tol=1e-11))


def test_trace_is_monotone(em):
    tr = np.asarray(em.loglik_trace)
    assert em.converged
    assert np.all(np.diff(tr) >= -1e-10 * np.abs(tr[:-1]))


def test_matches_direct_maximization(data, em):
    f = lambda v: -observed_loglik(data, Theta.from_vector(v, 3), SP, 0.3)
    g = lambda v: -observed_scores(data, Theta.from_vector(v, 3), SP, 0.3).sum(axis=0)
    opt = minimize(f, np.zeros(7), jac=g, method="BFGS", options={"gtol": 1e-8})
    np.testing.assert_allclose(em.theta_hat.vector(), opt.x, atol=1e-4)
    assert -opt.fun <= em.loglik_trace[-1] + 1e-6


def test_vcov_is_inverse_observed_information(data, em):
    f = lambda v: observed_loglik(data, Theta.from_vector(v, 3), SP, 0.3)
    H = approx_hess(em.theta_hat.vector(), f)
    want = np.linalg.inv(-H)
    np.testing.assert_allclose(em.vcov, want, rtol=1e-3, atol=1e-3 * np.abs(want).max())


def test_scores_are_loglik_gradient(data):
    th = Theta([0.1, 1.0, -1.0], 0.5, [0.0, 1.0, -1.0])
    f = lambda v: observed_loglik(data, Theta.from_vector(v, 3), SP, 0.4)
    v = th.vector()
    num = np.array([(f(v + e) - f(v - e)) / 2e-6 for e in np.eye(7) * 1e-6])
    np.testing.assert_allclose(observed_scores(data, th, SP, 0.4).sum(axis=0), num, rtol=1e-6, atol=1e-5)


def test_responsibilities_in_unit_interval(data, em):
    r = em.responsibilities
    assert r.shape == (data.n,) and np.all((r > 0) & (r < 1))
    np.testing.assert_allclose(r, responsibilities(data, em.theta_hat, SP, 0.3))


@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
def test_null_point_is_glm(data, p):
    res = em_fit(data, SensitivityPoint(0, 0), EmOptions(p=p))
    glm = sm.GLM(data.y, np.column_stack([data.X, data.z]), family=sm.families.Binomial()).fit(tol=1e-12)
    assert res.beta_hat == pytest.approx(glm.params[-1], abs=1e-6)


def test_rejects_bad_inputs(data):
    with pytest.raises(ValueError):
        EmOptions(p=1.0)
    with pytest.raises(ValueError, match="binary outcome"):
        em_fit(data, SP, spec=ModelSpec(outcome_family=GAUSSIAN))
