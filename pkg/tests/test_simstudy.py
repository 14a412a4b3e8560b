import io

import numpy as np
import pytest
import statsmodels.api as sm

from semisens import bernoulli_prior, grid_prior
from semisens.errors import SemisensError
from semisens.simstudy import (CSV_COLUMNS, KINDS, DgpSpec, EmMethod, SemiMethod, design_cells,
                               generate, metrics, replication_rng, run_study, study_row, write_csv)


@pytest.mark.parametrize("kind", KINDS)
def test_generate_shapes(kind):
    data, u = generate(DgpSpec(kind, 200), replication_rng(1, 0))
    assert data.n == 200 and data.p == 3 and u.shape == (200,)
    assert set(np.unique(data.z)) <= {0.0, 1.0}


def test_binary_design_coefficients_with_u_observed():
    data, u = generate(DgpSpec("binary_u", 100_000), replication_rng(2, 0))
    assert u.mean() == pytest.approx(0.2, abs=0.005)
    out = sm.GLM(data.y, np.column_stack([data.X, data.z, u]), family=sm.families.Binomial()).fit()
    np.testing.assert_allclose(out.params, [0, 4, -4, 2, 4], atol=5 * out.bse.max())
    trt = sm.GLM(data.z, np.column_stack([data.X, u]), family=sm.families.Binomial()).fit()
    np.testing.assert_allclose(trt.params, [0, 3, -3, 4], atol=5 * trt.bse.max())


def test_gaussian_design_coefficients():
    data, u = generate(DgpSpec("gaussian_y", 20_000), replication_rng(3, 0))
    out = sm.OLS(data.y, np.column_stack([data.X, data.z, u])).fit()
    np.testing.assert_allclose(out.params, [0, 1, 1, 2, 4], atol=5 * out.bse.max())
    assert np.sqrt(out.scale) == pytest.approx(1.0, abs=0.03)


def test_dependent_designs_tie_u_to_x1():
    data, u = generate(DgpSpec("dependent_normal_u", 5000), replication_rng(4, 0))
    assert np.corrcoef(u, data.X[:, 1])[0, 1] > 0.9
    data, u = generate(DgpSpec("dependent_beta_u", 5000), replication_rng(4, 0))
    assert np.all((u - data.X[:, 1] >= 0) & (u - data.X[:, 1] <= 1))


def test_replication_streams_are_reproducible_and_distinct():
    a = replication_rng(5, 0).uniform(size=3)
    np.testing.assert_array_equal(a, replication_rng(5, 0).uniform(size=3))
    assert not np.allclose(a, replication_rng(5, 1).uniform(size=3))


def test_dgp_validation():
    with pytest.raises(ValueError):
        DgpSpec("nope", 100)
    with pytest.raises(ValueError):
        DgpSpec("binary_u", 10)


def test_metrics_by_hand():
    m = metrics([1.0, 2.0, 3.0], [0.5] * 3, [(0.5, 1.5), (1.5, 2.5), (2.5, 3.5)], true_beta=2.5)
    assert m.mean == 2.0 and m.abs_bias == 0.5 and m.pct_bias == pytest.approx(20.0)
    assert m.se == pytest.approx(np.sqrt(2 / 3))
    assert m.rmse ** 2 == pytest.approx(m.abs_bias ** 2 + m.se ** 2)
    # closed intervals: 2.5 is covered by the second and third
    assert m.coverage == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        metrics([], [], [], 1.0)


def test_run_study_deterministic_across_workers():
    dgp = DgpSpec("beta_u", 200)
    meth = SemiMethod(grid_prior(0, 1, 0.5))
    one = run_study(dgp, meth, reps=4, seed=8, workers=1)
    two = run_study(dgp, meth, reps=4, seed=8, workers=2)
    np.testing.assert_array_equal(one.estimates, two.estimates)


class _AlwaysFails:
    name = "fails"
    h = alpha = None
    prior = bernoulli_prior(0.5)

    def run(self, data, sp, spec, level):
        raise SemisensError("boom")


def test_run_study_failure_guard():
    with pytest.raises(SemisensError, match="design/method mismatch"):
        run_study(DgpSpec("beta_u", 100), _AlwaysFails(), reps=3)
    m = run_study(DgpSpec("beta_u", 100), SemiMethod(grid_prior(0, 1, 0.5)), reps=2,
                  max_failure_rate=1.0)
    assert m.failures == 0
    with pytest.raises(ValueError):
        run_study(DgpSpec("beta_u", 100), _AlwaysFails(), reps=1)


def test_em_method_and_csv():
    m = run_study(DgpSpec("binary_u", 300), EmMethod(0.5), reps=3, seed=1)
    assert m.reps == 3
    row = study_row("binary_u", EmMethod(0.5, "em"), 300, m)
    buf = io.StringIO()
    write_csv([row], buf)
    header, line = buf.getvalue().splitlines()
    assert header.split(",") == CSV_COLUMNS
    assert line.startswith("binary_u,em,300,,,bernoulli:0.5,3,")


def test_design_cells():
    assert len(design_cells("table1")) == 12
    cells = design_cells("table2", n=500, h=0.1)
    assert len(cells) == 1 and cells[0][2] == 500 and cells[0][1].h == pytest.approx(0.1)
    kinds = {c[0] for c in design_cells("table3")}
    assert kinds == {"dependent_beta_u", "dependent_normal_u"}
    assert all(c[1].prior.size == 2 for c in design_cells("d2"))
    with pytest.raises(ValueError):
        design_cells("table9")
