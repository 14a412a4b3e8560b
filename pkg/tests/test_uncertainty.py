import numpy as np
import pytest
from scipy.stats import norm

from semisens import SensitivityPoint, Theta
from semisens.errors import SemisensError
from semisens.estimator import FitResult
from semisens.uncertainty import DRAW_CHUNK, multiplier_sup, rubin_pool, uniform_band


def _fake_fit(psi_beta, t, beta=1.0, converged=True):
    """FitResult whose beta influence column is ``psi_beta`` (p = 1, q = 3)."""
    n = psi_beta.size
    infl = np.zeros((n, 3))
    infl[:, 1] = psi_beta
    v = float(psi_beta @ psi_beta) / n ** 2
    vcov = np.diag([1.0, v, 1.0])
    th = Theta([0.0], beta, [0.0])
    return FitResult(SensitivityPoint(t, t), th, vcov, 0.95, infl.copy(), infl, np.eye(3), 1,
                     converged, 0.0)


def test_multiplier_sup_matches_direct_draws():
    rng = np.random.default_rng(0)
    psi = rng.normal(size=(50, 3))
    scale = np.array([1.0, 2.0, 0.5])
    got = multiplier_sup(psi, scale, 300, seed=11)
    eps = np.random.default_rng(np.random.SeedSequence(11)).standard_normal((300, 50))
    np.testing.assert_allclose(got, np.max(np.abs(eps @ psi) / scale, axis=1), rtol=1e-13)


def test_multiplier_sup_chunking_is_a_prefix():
    psi = np.random.default_rng(1).normal(size=(20, 2))
    long = multiplier_sup(psi, np.ones(2), DRAW_CHUNK + 250, seed=3)
    short = multiplier_sup(psi, np.ones(2), DRAW_CHUNK, seed=3)
    np.testing.assert_array_equal(long[:DRAW_CHUNK], short)


def test_single_point_critical_value_is_normal_quantile():
    psi = np.random.default_rng(2).normal(size=400)
    band = uniform_band([_fake_fit(psi, 0.0)], level=0.95, B=40_000, seed=5)
    assert band.c_hat == pytest.approx(norm.ppf(0.975), abs=0.04)


def test_band_widens_with_independent_points_and_not_with_copies():
    rng = np.random.default_rng(3)
    n = 400
    cols = [rng.normal(size=n) for _ in range(4)]
    indep = uniform_band([_fake_fit(c, float(t)) for t, c in enumerate(cols)], B=5000, seed=1)
    copies = uniform_band([_fake_fit(cols[0], float(t)) for t in range(4)], B=5000, seed=1)
    single = uniform_band([_fake_fit(cols[0], 0.0)], B=5000, seed=1)
    assert indep.c_hat > single.c_hat + 0.3
    assert copies.c_hat == pytest.approx(single.c_hat, rel=1e-12)
    half = indep.band[:, 1] - indep.beta
    np.testing.assert_allclose(half, indep.c_hat * np.sqrt(indep.v))
    assert np.all(half >= norm.ppf(0.975) * np.sqrt(indep.v))


def test_band_is_deterministic_in_seed():
    psi = np.random.default_rng(4).normal(size=(100, 3))
    fits = [_fake_fit(psi[:, j], float(j)) for j in range(3)]
    a = uniform_band(fits, B=500, seed=9)
    b = uniform_band(fits, B=500, seed=9)
    c = uniform_band(fits, B=500, seed=10)
    assert a.c_hat == b.c_hat and a.c_hat != c.c_hat
    assert [r[0] for r in a.rows()] == [f.sp for f in fits]


def test_band_errors():
    psi = np.random.default_rng(5).normal(size=50)
    ok = _fake_fit(psi, 0.0)
    with pytest.raises(ValueError, match="insufficient draws"):
        uniform_band([ok], B=99)
    with pytest.raises(ValueError):
        uniform_band([])
    with pytest.raises(SemisensError, match="converged"):
        uniform_band([ok, _fake_fit(psi, 1.0, converged=False)])
    with pytest.raises(ValueError):
        uniform_band([ok, _fake_fit(psi[:40], 1.0)])
    with pytest.raises(ValueError):
        uniform_band([ok], statistic="bogus")


def test_rubin_pool_by_hand():
    est = [(1.0, 0.2), (1.4, 0.3), (0.9, 0.25)]
    res = rubin_pool(est, level=0.9)
    W = (0.04 + 0.09 + 0.0625) / 3
    B = np.var([1.0, 1.4, 0.9], ddof=1)
    T = W + (1 + 1 / 3) * B
    assert res.beta == pytest.approx(1.1)
    assert res.within == pytest.approx(W) and res.between == pytest.approx(B)
    assert res.se == pytest.approx(np.sqrt(T))
    assert res.ci[1] - res.beta == pytest.approx(norm.ppf(0.95) * np.sqrt(T))
    with pytest.raises(ValueError):
        rubin_pool([(1.0, 0.1)])
