import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_chain
from lifetime_pd.errors import DimensionMismatch, ValidationError
from lifetime_pd.propagation import (
    PDTermStructure,
    RatingDistribution,
    deviation_bound,
    estimate_lipschitz,
    induced_norm_1to1,
    lifetime_pd,
    propagate_one,
    propagate_path,
    write_term_structure_csv,
)
from lifetime_pd.ratings import SensitivityMatrix, TransitionMatrix, overlay_batch


def test_ttc_path_matches_matrix_power(calib):
    P = calib.ttc
    Y = lifetime_pd(calib.pi0, [P] * 40).values
    for t in (1, 20, 40):
        ref = calib.pi0.weights @ np.linalg.matrix_power(P.entries, t)
        assert Y[t - 1] == pytest.approx(ref[-1], abs=1e-14)
    assert Y[0] == pytest.approx(0.0047, abs=1e-15)


def test_identity_keeps_distribution():
    pi = RatingDistribution([0.2, 0.5, 0.3])
    out = lifetime_pd(pi, [TransitionMatrix.identity(3)] * 5, include_y0=True)
    assert out.y0 == 0.3
    np.testing.assert_array_equal(out.values, 0.3)


def test_batch_size_does_not_change_results(calib):
    m = np.random.default_rng(0).normal(size=(7, 30))
    P = overlay_batch(calib.ttc, calib.betas, m)
    full = propagate_path(calib.pi0.weights, P)
    for k in range(7):
        np.testing.assert_array_equal(full[k], propagate_path(calib.pi0.weights, P[k]))


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_propagation_stays_on_simplex(seed, K):
    rng = np.random.default_rng(seed)
    P, B = random_chain(rng, K)
    pi = rng.dirichlet(np.ones(K))
    path = propagate_path(pi, overlay_batch(P, B, rng.uniform(-3, 3, 25)))
    assert np.all(path >= 0)
    np.testing.assert_allclose(path.sum(-1), 1.0, atol=1e-12)
    assert np.all(np.diff(path[:, -1]) >= -1e-15)


def test_propagate_one_checks_dimensions():
    with pytest.raises(DimensionMismatch):
        propagate_one(RatingDistribution([0.5, 0.5]), TransitionMatrix.identity(3))


def test_distribution_and_term_structure_validation(tmp_path):
    with pytest.raises(ValidationError):
        RatingDistribution([0.5, 0.6])
    with pytest.raises(ValidationError):
        PDTermStructure([0.1, 0.05])
    with pytest.raises(ValidationError):
        PDTermStructure([1.5])
    assert RatingDistribution.from_counts([1, 3]).weights.tolist() == [0.25, 0.75]
    f = tmp_path / "y.csv"
    write_term_structure_csv(f, [0.1, 0.2])
    assert f.read_text() == "t,Y_t\n1,0.10000000000000001\n2,0.20000000000000001\n"


def test_norm_and_bound():
    D = np.array([[0.1, -0.3], [0.2, 0.0]])
    assert induced_norm_1to1(D) == pytest.approx(0.4)
    x = np.array([1.0, -2.0])
    assert np.abs(x @ D).sum() <= induced_norm_1to1(D) * np.abs(x).sum()
    np.testing.assert_allclose(deviation_bound(0.1, 2.0, [1, -1, 0.5]), [2.1, 4.1, 5.1])
    with pytest.raises(ValidationError):
        deviation_bound(-1, 1, [0])


def test_lipschitz_estimate(calib):
    assert estimate_lipschitz(calib.ttc, SensitivityMatrix.zeros(4)) == 0.0
    L = estimate_lipschitz(calib.ttc, calib.betas)
    assert L == pytest.approx(1.218, abs=1e-3)
    # every coarse quotient sits below the inflated estimate
    rng = np.random.default_rng(1)
    a, b = rng.uniform(-3, 3, (2, 200))
    Ga, Gb = overlay_batch(calib.ttc, calib.betas, a), overlay_batch(calib.ttc, calib.betas, b)
    q = np.abs(Ga - Gb).sum(-1).max(-1) / np.abs(a - b)
    assert q.max() <= L
