import csv
import io
import json

import numpy as np
import pytest

from semisens import FitOptions, SensitivityPoint, fit, grid_prior
from semisens.cli import BAND_COLUMNS, SWEEP_COLUMNS, Roles, ingest, interpretation, main
from semisens.model import GAUSSIAN, ModelSpec
from semisens.simstudy import DgpSpec, generate, replication_rng


@pytest.fixture(scope="module")
def csv_path(tmp_path_factory):
    data, _ = generate(DgpSpec("beta_u", 300), replication_rng(21, 0))
    path = tmp_path_factory.mktemp("cli") / "obs.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "z", "x1", "x2", "unused"])
        for y, z, x in zip(data.y, data.z, data.X):
            w.writerow([int(y), int(z), repr(float(x[1])), repr(float(x[2])), "a"])
    return path, data


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


COMMON = ["--outcome", "y", "--treatment", "z", "--covariates", "x1,x2"]


def test_ingest_roundtrip(csv_path):
    path, data = csv_path
    got = ingest(str(path), Roles("y", "z", ["x1", "x2"]))
    np.testing.assert_array_equal(got.X, data.X)
    np.testing.assert_array_equal(got.y, data.y)


def test_fit_json_matches_library(csv_path, capsys):
    path, data = csv_path
    code, out, err = _run(["fit", "--data", path, *COMMON, "--prior", "grid:0:1:0.5",
                           "--delta", 1, "--gamma", 1, "--influence", "--report"], capsys)
    assert code == 0
    doc = json.loads(out)
    ref = fit(data, SensitivityPoint(1, 1), FitOptions(prior=grid_prior(0, 1, 0.5)))
    assert doc["beta_hat"] == ref.beta_hat and doc["se"] == ref.beta_se
    assert len(doc["influence_beta"]) == data.n
    assert doc["interpretation_gamma_factor"] == pytest.approx(np.e)
    assert doc["prior"] == "grid:0:1:0.5"
    assert "factor of 2.72" in err


def test_sweep_and_band_tables(csv_path, capsys, tmp_path):
    path, _ = csv_path
    code, out, _ = _run(["sweep", "--data", path, *COMMON, "--prior", "grid:0:1:0.5",
                         "--deltas", "0,1", "--gammas", "0,0.5"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == SWEEP_COLUMNS
    assert [(r["delta"], r["gamma"]) for r in rows] == [("0.0", "0.0"), ("0.0", "0.5"),
                                                        ("1.0", "0.0"), ("1.0", "0.5")]
    target = tmp_path / "band.csv"
    code, _, _ = _run(["band", "--data", path, *COMMON, "--prior", "grid:0:1:0.5",
                       "--path", "0,1", "--seed", 4, "--B", 200, "-o", target], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(target)))
    assert list(rows[0]) == BAND_COLUMNS
    for r in rows:
        assert float(r["band_lo"]) <= float(r["ci_lo"]) and float(r["ci_hi"]) <= float(r["band_hi"])


def test_em_pool_identify(csv_path, capsys, tmp_path):
    path, _ = csv_path
    files = []
    for k, p in enumerate((0.3, 0.5)):
        target = tmp_path / f"em{k}.json"
        code, _, _ = _run(["em", "--data", path, *COMMON, "--p", p, "--delta", 1, "--gamma", 1,
                           "-o", target], capsys)
        assert code == 0
        doc = json.loads(target.read_text())
        assert doc["p"] == p and doc["loglik_trace"] == sorted(doc["loglik_trace"])
        files.append(str(target))
    code, out, _ = _run(["pool", "--inputs", ",".join(files)], capsys)
    assert code == 0 and json.loads(out)["m"] == 2
    code, out, _ = _run(["identify", "--cells", "0.3,0.2,0.1,0.4", "--prior", "bernoulli:0.5",
                         "--delta", 0, "--gamma", 0], capsys)
    assert code == 0
    assert json.loads(out)["beta_z"] == pytest.approx(np.log(0.4 * 0.3 / (0.2 * 0.1)))


def test_simulate_small(capsys):
    code, out, _ = _run(["simulate", "--design", "table2", "--n", 200, "--h", 0.5, "--reps", 3,
                         "--seed", 1], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and rows[0]["design"] == "beta_u" and rows[0]["reps"] == "3"


@pytest.mark.parametrize("argv,code,msg", [
    (["fit", "--data", "missing.csv", "--outcome", "y", "--treatment", "z"], 1, "missing.csv"),
    (["sweep", "--data", "{csv}", *COMMON, "--deltas", "1,0", "--gammas", "0"], 1, "increasing"),
    (["sweep", "--data", "{csv}", *COMMON], 1, "--path"),
    (["fit", "--data", "{csv}", *COMMON, "--prior", "beta:1:1"], 1, "unknown prior"),
    (["fit", "--data", "{csv}", "--outcome", "y", "--treatment", "z", "--covariates", "x9"], 1, "x9"),
    (["band", "--data", "{csv}", *COMMON, "--path", "0", "--seed", 1, "--B", 10], 1, "insufficient draws"),
    (["fit", "--data", "{csv}", *COMMON, "--prior", "grid:0:1:0.05", "--delta", 1, "--gamma", 1,
      "--alpha", 0], 1, "alpha"),
    (["identify", "--cells", "0.5,0.5,0,0", "--prior", "bernoulli:0.5", "--delta", 0, "--gamma", 0],
     2, "boundary likelihood"),
    (["simulate", "--design", "table1"], 1, "--seed"),
])
def test_error_exit_codes(csv_path, capsys, argv, code, msg):
    argv = [str(a).replace("{csv}", str(csv_path[0])) for a in argv]
    got, _, err = _run(argv, capsys)
    assert got == code
    assert msg in err


def test_incomplete_and_nonbinary_rows(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,z,x\n1,0,0.5\n,1,0.2\n0,1,\n")
    code, _, err = _run(["fit", "--data", bad, "--outcome", "y", "--treatment", "z",
                         "--covariates", "x"], capsys)
    assert code == 1 and "2 incomplete rows" in err
    bad.write_text("y,z,x\n1,0,0.5\n0,3,0.2\n")
    code, _, err = _run(["fit", "--data", bad, "--outcome", "y", "--treatment", "z",
                         "--covariates", "x"], capsys)
    assert code == 1 and "data row 2" in err


def test_interpretation_sentences():
    lines = interpretation(SensitivityPoint(1.0, 0.7), ModelSpec())
    assert "at most a factor of 2.01" in lines[0]
    assert "factor of 2.72" in lines[1]
    lines = interpretation(SensitivityPoint(1.0, 0.7), ModelSpec(outcome_family=GAUSSIAN), sigma=2.0)
    assert "0.50 standard deviations" in lines[1]
