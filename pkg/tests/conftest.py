"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import numpy as np
import pytest

from semisens import Dataset

_VERDICTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    _VERDICTS[criterion] = (bool(ok), detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo checks that take minutes to hours")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_VERDICTS):
        ok, detail = _VERDICTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def logistic_data(n, rng, lam=(-0.3, 0.6, 0.4), beta=0.9, kappa=(0.2, 0.8, -0.5)):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, len(lam) - 1))])
    z = (rng.uniform(size=n) < 1 / (1 + np.exp(-X @ np.asarray(kappa)))).astype(float)
    y = (rng.uniform(size=n) < 1 / (1 + np.exp(-(X @ np.asarray(lam) + beta * z)))).astype(float)
    return Dataset(y, z, X)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_data(rng):
    return logistic_data(400, rng)
