"""Filter steps, Riccati diagnostics and the batched runner."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifetime_pd.errors import DimensionMismatch, NoConvergence, ValidationError
from lifetime_pd.kalman import (
    AnchorConfig,
    FilterState,
    ObservationModel,
    anchored_observation,
    anchored_step,
    deviation_observation,
    deviation_step,
    error_trace,
    naive_observation,
    naive_step,
    predict,
    riccati_map,
    riccati_steady_state,
    run_filter,
    update,
)
from lifetime_pd.macro import MacroStateModel

MODEL = MacroStateModel.scalar()


def _spd(rng, r, scale=1.0):
    X = rng.normal(size=(r, r))
    return scale * (X @ X.T + 0.1 * np.eye(r))


def _random_system(seed, r, p):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(r, r))
    A *= 0.9 / max(1e-9, np.max(np.abs(np.linalg.eigvals(A))))
    model = MacroStateModel(A, _spd(rng, r, 0.3), rng.normal(size=(p, r)), _spd(rng, p, 0.5), rng.normal(size=r))
    state = FilterState(rng.normal(size=r), _spd(rng, r))
    return rng, model, state


def test_scalar_update_closed_form():
    s = FilterState([0.0], [[1.0]])
    post = update(predict(s, MODEL), [1.0], naive_observation(MODEL))
    P = 0.81 + 0.19
    k = P / (P + 0.25)
    assert post.gain[0, 0] == pytest.approx(k)
    assert post.state.mean[0] == pytest.approx(k)
    assert post.state.covariance[0, 0] == pytest.approx(P * 0.25 / (P + 0.25))
    assert post.innovation[0] == 1.0


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
def test_joseph_symmetric_psd_and_shrinks(seed, r, p):
    rng, model, state = _random_system(seed, r, p)
    for _ in range(5):
        pred = predict(state, model)
        state = update(pred, rng.normal(size=p), naive_observation(model)).state
        S = state.covariance
        assert np.max(np.abs(S - S.T)) <= 1e-12
        assert np.min(np.linalg.eigvalsh(S)) >= -1e-10
        assert np.min(np.linalg.eigvalsh(pred.covariance - S)) >= -1e-10


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.floats(0.01, 5.0))
def test_stacked_equals_sequential(seed, r, s2):
    rng, model, state = _random_system(seed, r, 1)
    anchor = AnchorConfig(model.M_star, s2, 0.0, 5)
    f = rng.normal(size=1)
    stacked = update(state, anchored_observation(model, anchor, 0).observation(f), anchored_observation(model, anchor, 0))
    fore = naive_observation(model)
    anc = ObservationModel(np.eye(r), s2 * np.eye(r))
    one = update(update(state, f, fore).state, model.M_star, anc).state
    two = update(update(state, model.M_star, anc).state, f, fore).state
    for seq in (one, two):
        np.testing.assert_allclose(stacked.state.mean, seq.mean, atol=1e-10)
        np.testing.assert_allclose(stacked.state.covariance, seq.covariance, atol=1e-10)


def test_exact_anchor_is_a_projection():
    anchor = AnchorConfig([0.7], 0.25, 0.0, 2)
    s = FilterState([3.0], [[2.0]])
    post = anchored_step(s, MODEL.with_(M_star=[0.7]), [5.0], anchor, t=2)
    assert post.mean[0] == 0.7
    assert post.covariance[0, 0] == 0.0
    res = update(s, [5.0, 0.7], anchored_observation(MODEL, anchor, 3))
    np.testing.assert_array_equal(res.gain, [[0.0, 1.0]])


def test_partial_exact_anchor_in_two_dimensions():
    model = MacroStateModel(0.5 * np.eye(2), 0.1 * np.eye(2), [[1.0, 1.0]], [[0.3]], [0.0, 0.0])
    anchor = AnchorConfig([1.0, -1.0], 0.0, 0.0, 1)
    post = anchored_step(FilterState([0.2, 0.4], np.eye(2)), model, [3.0], anchor, t=0)
    np.testing.assert_allclose(post.mean, [1.0, -1.0], atol=1e-15)
    np.testing.assert_allclose(post.covariance, 0.0, atol=1e-15)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 2))
def test_deviation_form_is_a_shifted_naive_filter(seed, r, p):
    rng, model, state = _random_system(seed, r, p)
    m_star = model.M_star
    anchor = AnchorConfig(m_star)
    f = rng.normal(size=p)
    got = deviation_step(state, model, deviation_observation(f, model, m_star), anchor)
    shifted = FilterState(state.mean - m_star, state.covariance)
    ref = naive_step(shifted, model, f - model.H @ m_star)
    np.testing.assert_allclose(got.mean - m_star, ref.mean, atol=1e-12)
    np.testing.assert_allclose(got.covariance, ref.covariance, atol=1e-12)


def test_riccati_diagnostics():
    naive = riccati_steady_state(MODEL, naive_observation(MODEL))
    P = naive.predictor_cov
    assert np.max(np.abs(riccati_map(MODEL, naive_observation(MODEL), P) - P)) < 1e-11
    assert naive.sigma_inf[0, 0] == pytest.approx(0.136476, abs=1e-6)
    assert naive.closed_loop_spectral_radius == pytest.approx(0.9 * (1 - naive.gain_inf[0, 0]))
    anc = riccati_steady_state(MODEL, anchored_observation(MODEL, AnchorConfig([0.0]), 0))
    assert anc.closed_loop_spectral_radius < naive.closed_loop_spectral_radius
    np.testing.assert_allclose(anc.gain_inf[0, 0], anc.gain_inf[0, 1])
    with pytest.raises(NoConvergence):
        riccati_steady_state(MODEL, naive_observation(MODEL), max_iter=2)


def test_error_trace():
    truth = np.zeros(30)
    est = 0.5 ** np.arange(30)
    tr = error_trace(truth, est, T_F=5)
    assert tr.decay_ratio == pytest.approx(0.5)
    np.testing.assert_allclose(tr.sq_norms, est**2)
    with pytest.raises(Exception):
        error_trace(truth, est[:-1])


def test_run_filter_matches_stepwise():
    rng = np.random.default_rng(8)
    y = rng.normal(size=(3, 25))
    anchor = AnchorConfig([0.0], 0.25, 0.0, 10)
    for method in ("naive", "anchored"):
        run = run_filter(MODEL, y, method, anchor, q_out=np.zeros((1, 1)))
        for k in range(3):
            s = FilterState([0.0], MODEL.stationary_covariance())
            for t in range(25):
                if method == "naive":
                    s = naive_step(s, MODEL, [y[k, t]])
                else:
                    s = anchored_step(s, MODEL, [y[k, t]], anchor, t, Q=np.zeros((1, 1)) if t >= 10 else None)
                assert run.means[k, t, 0] == pytest.approx(s.mean[0], abs=1e-12)
                assert run.covs[t, 0, 0] == pytest.approx(s.covariance[0, 0], abs=1e-12)


def test_run_filter_argument_checks():
    with pytest.raises(ValidationError):
        run_filter(MODEL, np.zeros((1, 3)), "anchored")
    with pytest.raises(ValidationError):
        run_filter(MODEL, np.zeros((1, 3)), "smoother")
    with pytest.raises(DimensionMismatch):
        run_filter(MODEL, np.zeros(3), "naive")
    explosive = MacroStateModel.scalar(rho=1.02)
    run = run_filter(explosive, np.ones((1, 5)), "naive")
    assert np.all(np.isfinite(run.means))


def test_self_observation_fixture_carries_no_information():
    """Negative fixture: feeding back ``H mu_{t-1}`` instead of a forecast.

    The innovation equals ``H (I - A) mu_{t-1}``, so the estimate is a fixed
    linear map of its own past and ignores whatever the truth does.
    """
    def self_observing_path(mu0, T):
        s = FilterState([mu0], [[1.0]])
        out, innovations = [], []
        obs = naive_observation(MODEL)
        for _ in range(T):
            y = MODEL.H @ s.mean
            res = update(predict(s, MODEL), y, obs)
            innovations.append((res.innovation[0], (MODEL.H @ (np.eye(1) - MODEL.A) @ s.mean)[0]))
            s = res.state
            out.append(s.mean[0])
        return np.array(out), innovations

    path, innovations = self_observing_path(2.0, 40)
    for got, expected in innovations:
        assert got == pytest.approx(expected, abs=1e-14)
    # two different truths (0 and 2) give the same estimate path, so at least one is badly biased
    err_truth_zero = np.abs(path - 0.0).mean()
    err_truth_two = np.abs(path - 2.0).mean()
    assert max(err_truth_zero, err_truth_two) > 0.5
