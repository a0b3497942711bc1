from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from lifetime_pd.config import default_config
from lifetime_pd.ratings import SensitivityMatrix, TransitionMatrix

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# criterion id -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def calib():
    return default_config()


@pytest.fixture(scope="session")
def ttc(calib) -> TransitionMatrix:
    return calib.ttc


@pytest.fixture(scope="session")
def betas(calib) -> SensitivityMatrix:
    return calib.betas


def random_chain(rng: np.random.Generator, K: int, beta_scale: float = 2.0):
    """Random absorbing TTC matrix and sensitivities with a zero default row."""
    P = rng.dirichlet(np.ones(K), size=K)
    P[-1] = 0.0
    P[-1, -1] = 1.0
    B = rng.normal(0.0, beta_scale, size=(K, K))
    B[-1] = 0.0
    return TransitionMatrix(P), SensitivityMatrix(B)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split("-")[1])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:6s} {'PASS' if ok else 'FAIL'}  {detail}")
