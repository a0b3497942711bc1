"""Kalman filtering of the macro state: naive, stacked-anchor and deviation forms.

All updates use the Joseph covariance form and solve ``S X = H Sigma`` for
the gain. Observation rows with zero noise variance are applied as hard
constraints (orthogonal projection onto ``H_e x = y_e``), which is the
limit the anchored filter uses beyond the forecast window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, LengthMismatch, NoConvergence, SingularInnovation, ValidationError
from .macro import MacroStateModel

SYM_TOL = 1e-12
PSD_TOL = 1e-10
COND_LIMIT = 1e14


def _apply(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    # M @ x over the last axis of a (possibly batched) vector; einsum keeps
    # per-row arithmetic identical whatever the batch size
    return np.einsum("jk,...k->...j", M, x)


def _clean_cov(S: np.ndarray) -> np.ndarray:
    S = 0.5 * (S + S.T)
    if not np.all(np.isfinite(S)):
        raise ValidationError("covariance has non-finite entries")
    w, V = np.linalg.eigh(S)
    if w.size and w.min() < -PSD_TOL:
        raise ValidationError(f"covariance is not PSD (min eigenvalue {w.min():.3e})")
    if w.size and w.min() < 0.0:
        S = (V * np.clip(w, 0.0, None)) @ V.T
        S = 0.5 * (S + S.T)
    return S


@dataclass(frozen=True)
class FilterState:
    mean: np.ndarray
    covariance: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        S = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if m.ndim != 1 or S.shape != (m.size, m.size):
            raise DimensionMismatch(f"mean {m.shape} and covariance {S.shape} disagree")
        if not np.all(np.isfinite(m)):
            raise ValidationError("filter mean has non-finite entries")
        if np.max(np.abs(S - S.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(S), initial=0.0)):
            raise ValidationError("filter covariance is not symmetric")
        S = _clean_cov(S)
        m.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", S)

    @property
    def r(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class AnchorConfig:
    m_star: np.ndarray
    sigma_star_sq_in: float = 0.25
    sigma_star_sq_out: float = 0.0
    forecast_horizon_TF: int = 20

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m_star, dtype=float)).copy()
        m.setflags(write=False)
        object.__setattr__(self, "m_star", m)
        if self.sigma_star_sq_in < 0 or self.sigma_star_sq_out < 0:
            raise ValidationError("anchor variances must be nonnegative")
        if self.forecast_horizon_TF < 1:
            raise ValidationError("forecast horizon must be at least one quarter")

    def sigma_sq(self, t: int) -> float:
        return self.sigma_star_sq_in if t < self.forecast_horizon_TF else self.sigma_star_sq_out


@dataclass(frozen=True)
class ObservationModel:
    """Effective observation map and noise; ``kind`` fixes how ``y`` is assembled."""

    H_eff: np.ndarray
    R_eff: np.ndarray
    kind: str = "forecast"
    m_star: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H_eff, dtype=float))
        R = np.atleast_2d(np.asarray(self.R_eff, dtype=float))
        if R.shape != (H.shape[0], H.shape[0]):
            raise DimensionMismatch(f"R_eff {R.shape} does not match H_eff {H.shape}")
        if not np.allclose(R, R.T, atol=SYM_TOL, rtol=0) or np.min(np.linalg.eigvalsh(R)) < -PSD_TOL:
            raise ValidationError("R_eff must be symmetric PSD")
        object.__setattr__(self, "H_eff", H)
        object.__setattr__(self, "R_eff", R)

    @property
    def p(self) -> int:
        return self.H_eff.shape[0]

    def observation(self, forecast) -> np.ndarray:
        f = np.asarray(forecast, dtype=float)
        if self.kind == "stacked":
            m = np.broadcast_to(self.m_star, f.shape[:-1] + self.m_star.shape) if f.ndim > 1 else self.m_star
            return np.concatenate([np.atleast_1d(f), m], axis=-1)
        return np.atleast_1d(f)


def naive_observation(model: MacroStateModel) -> ObservationModel:
    return ObservationModel(model.H, model.R, "forecast")


def anchored_observation(model: MacroStateModel, anchor: AnchorConfig, t: int) -> ObservationModel:
    """Stacked ``[H; I]`` with ``diag(R, sigma_star^2(t) I)``."""
    r, p = model.r, model.H.shape[0]
    if anchor.m_star.shape != (r,):
        raise DimensionMismatch("anchor level must have the state dimension")
    H = np.vstack([model.H, np.eye(r)])
    R = np.zeros((p + r, p + r))
    R[:p, :p] = model.R
    R[p:, p:] = anchor.sigma_sq(t) * np.eye(r)
    return ObservationModel(H, R, "stacked", anchor.m_star)


class UpdateResult(NamedTuple):
    state: FilterState
    innovation: np.ndarray
    gain: np.ndarray


def _exact_rows(R: np.ndarray) -> np.ndarray:
    diag0 = np.diag(R) == 0.0
    if diag0.any():
        coupled = np.any(R[diag0][:, ~diag0] != 0.0)
        if coupled:
            raise ValidationError("zero-variance observation rows must be uncorrelated with the rest")
    return diag0


def _update_core(mean: np.ndarray, S: np.ndarray, y: np.ndarray, H: np.ndarray, R: np.ndarray):
    """Shared update math; ``mean`` and ``y`` may carry leading batch axes."""
    r = S.shape[0]
    exact = _exact_rows(R)
    noisy = ~exact
    innovation = y - _apply(H, mean)
    gain = np.zeros((r, H.shape[0]))
    m = mean
    if noisy.any():
        Hn, Rn = H[noisy], R[np.ix_(noisy, noisy)]
        Sn = Hn @ S @ Hn.T + Rn
        if not np.all(np.isfinite(Sn)) or np.linalg.cond(Sn) > COND_LIMIT:
            raise SingularInnovation("innovation covariance is numerically singular")
        Kn = np.linalg.solve(Sn, Hn @ S).T
        m = m + _apply(Kn, innovation[..., noisy])
        IKH = np.eye(r) - Kn @ Hn
        S = IKH @ S @ IKH.T + Kn @ Rn @ Kn.T
        gain[:, noisy] = Kn
    if exact.any():
        He = H[exact]
        Hp = np.linalg.pinv(He)
        N = np.eye(r) - Hp @ He
        m = m + _apply(Hp, y[..., exact] - _apply(He, m))
        sel = np.flatnonzero(np.all((He == 0.0) | (He == 1.0), axis=0) & (He.sum(axis=0) == 1.0))
        if He.sum() == len(sel) == He.shape[0]:
            # anchor rows pick single coordinates: set them exactly
            m = np.array(m, copy=True)
            m[..., sel] = y[..., exact][..., np.argmax(He[:, sel], axis=0)]
        S = N @ S @ N.T
        gain[:, noisy] = N @ gain[:, noisy]
        gain[:, exact] = Hp
    return m, _clean_cov(S), innovation, gain


def predict(state: FilterState, model: MacroStateModel, Q: np.ndarray | None = None) -> FilterState:
    """``mu' = A mu``, ``Sigma' = A Sigma A' + Q``; ``Q`` overrides the model's when given."""
    if state.r != model.r:
        raise DimensionMismatch(f"state dimension {state.r} vs model dimension {model.r}")
    Qt = model.Q if Q is None else np.atleast_2d(Q)
    A = model.A
    return FilterState(A @ state.mean, A @ state.covariance @ A.T + Qt, state.time_index + 1)


def update(state: FilterState, y, obs: ObservationModel) -> UpdateResult:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (obs.p,) or obs.H_eff.shape[1] != state.r:
        raise DimensionMismatch(f"observation {y.shape} vs model with p={obs.p}, r={obs.H_eff.shape[1]}")
    m, S, innov, K = _update_core(state.mean, state.covariance, y, obs.H_eff, obs.R_eff)
    return UpdateResult(FilterState(m, S, state.time_index), innov, K)


def naive_step(state: FilterState, model: MacroStateModel, forecast_value) -> FilterState:
    """Predict, then treat the forecast itself as the observation."""
    obs = naive_observation(model)
    return update(predict(state, model), obs.observation(forecast_value), obs).state


def anchored_step(
    state: FilterState,
    model: MacroStateModel,
    forecast_value,
    anchor: AnchorConfig,
    t: int,
    Q: np.ndarray | None = None,
) -> FilterState:
    """Predict, then update on the stacked observation ``(forecast, m_star)``."""
    obs = anchored_observation(model, anchor, t)
    return update(predict(state, model, Q), obs.observation(forecast_value), obs).state


def deviation_observation(forecast, model: MacroStateModel, m_star) -> np.ndarray:
    """Forecast of ``M`` rewritten as an observation of the deviation ``M - M*``."""
    return np.atleast_1d(np.asarray(forecast, dtype=float)) - model.H @ np.atleast_1d(m_star)


def deviation_step(state: FilterState, model: MacroStateModel, y_value, anchor: AnchorConfig) -> FilterState:
    """Filter ``xi = M - M*`` with ``xi' = A xi + w`` and ``y = H xi + v``.

    ``state`` and the returned state are in ``M`` coordinates; ``y_value``
    is already a deviation observation (see ``deviation_observation``).
    """
    shifted = FilterState(state.mean - anchor.m_star, state.covariance, state.time_index)
    obs = naive_observation(model)
    post = update(predict(shifted, model), y_value, obs).state
    return FilterState(post.mean + anchor.m_star, post.covariance, post.time_index)


class RiccatiSolution(NamedTuple):
    sigma_inf: np.ndarray
    gain_inf: np.ndarray
    closed_loop_spectral_radius: float
    predictor_cov: np.ndarray
    iterations: int


def riccati_steady_state(
    model: MacroStateModel,
    obs: ObservationModel,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    Q: np.ndarray | None = None,
) -> RiccatiSolution:
    """Iterate the predictor Riccati map to its fixed point.

    Returns the filtered steady-state covariance, the steady-state gain
    ``K`` and the spectral radius of ``(I - K H) A``.
    """
    A, H, R = model.A, obs.H_eff, obs.R_eff
    Qm = model.Q if Q is None else np.atleast_2d(Q)
    P = Qm.copy()
    zero = np.zeros(model.r)
    y0 = np.zeros(obs.p)
    change = np.inf
    for it in range(1, max_iter + 1):
        _, Sf, _, K = _update_core(zero, P, y0, H, R)
        P_next = A @ Sf @ A.T + Qm
        P_next = 0.5 * (P_next + P_next.T)
        change = float(np.max(np.abs(P_next - P)))
        P = P_next
        if change < tol:
            break
    else:
        raise NoConvergence(max_iter, change)
    _, Sf, _, K = _update_core(zero, P, y0, H, R)
    closed = (np.eye(model.r) - K @ H) @ A
    radius = float(np.max(np.abs(np.linalg.eigvals(closed))))
    return RiccatiSolution(Sf, K, radius, P, it)


def riccati_map(model: MacroStateModel, obs: ObservationModel, P: np.ndarray) -> np.ndarray:
    """One application of the predictor Riccati map."""
    _, Sf, _, _ = _update_core(np.zeros(model.r), P, np.zeros(obs.p), obs.H_eff, obs.R_eff)
    return model.A @ Sf @ model.A.T + model.Q


@dataclass(frozen=True)
class ErrorTrace:
    errors: np.ndarray
    sq_norms: np.ndarray
    decay_ratio: float


def error_trace(truth, estimates, T_F: int = 20, floor: float = 1e-14) -> ErrorTrace:
    """Per-step errors ``e_t = estimate_t - truth_t`` and the post-window decay ratio.

    The decay ratio is ``max ||e_{t+1}|| / ||e_t||`` over ``t >= T_F + 2``
    with ``||e_t|| > floor``; 0 when no such step exists.
    """
    x = np.asarray(truth, dtype=float)
    m = np.asarray(estimates, dtype=float)
    if x.shape != m.shape:
        raise LengthMismatch(f"truth {x.shape} vs estimates {m.shape}")
    e = m - x
    norms = np.abs(e) if e.ndim == 1 else np.linalg.norm(e, axis=-1)
    ratio = 0.0
    for t in range(T_F + 2, norms.size - 1):
        if norms[t] > floor:
            ratio = max(ratio, float(norms[t + 1] / norms[t]))
    return ErrorTrace(e, norms**2, ratio)


@dataclass
class FilterRun:
    """Batched filter output: ``means (n, T, r)``, ``covs (T, r, r)``,
    ``gains (T, r, p)``, ``innovations (n, T, p)``."""

    means: np.ndarray
    covs: np.ndarray
    gains: list = field(default_factory=list)
    innovations: list = field(default_factory=list)


def run_filter(
    model: MacroStateModel,
    forecasts: np.ndarray,
    method: str,
    anchor: AnchorConfig | None = None,
    q_out: np.ndarray | None = None,
    init: FilterState | None = None,
) -> FilterRun:
    """Filter a batch of forecast paths of shape ``(n, T)`` (scalar) or ``(n, T, p)``.

    Covariances and gains do not depend on the data, so they are computed
    once per step and shared by every path. ``method`` is ``"naive"`` or
    ``"anchored"``; ``q_out`` replaces ``Q`` for predictions into
    ``t >= T_F`` (anchored only). The prior defaults to ``N(M*, stationary)``
    so the first prediction leaves it unchanged.
    """
    f = np.asarray(forecasts, dtype=float)
    if f.ndim == 2:
        f = f[..., None]
    if f.ndim != 3:
        raise DimensionMismatch("forecasts must have shape (n, T) or (n, T, p)")
    n, T, _ = f.shape
    if method not in ("naive", "anchored"):
        raise ValidationError(f"unknown filter method {method!r}")
    if method == "anchored" and anchor is None:
        raise ValidationError("anchored filtering needs an AnchorConfig")
    r = model.r
    if init is None:
        if np.max(np.abs(np.linalg.eigvals(model.A))) < 1.0:
            P0 = model.stationary_covariance()
        else:
            P0 = 1e6 * np.eye(model.r)  # diffuse prior for a non-stationary state
        init = FilterState(model.M_star, P0)
    mean = np.broadcast_to(init.mean, (n, r)).copy()
    S = init.covariance
    means = np.empty((n, T, r))
    covs = np.empty((T, r, r))
    gains, innovations = [], []
    naive_obs = naive_observation(model)
    for t in range(T):
        Qt = model.Q
        if method == "anchored" and q_out is not None and t >= anchor.forecast_horizon_TF:
            Qt = np.atleast_2d(q_out)
        mean = _apply(model.A, mean)
        S = model.A @ S @ model.A.T + Qt
        obs = naive_obs if method == "naive" else anchored_observation(model, anchor, t)
        y = obs.observation(f[:, t, :])
        mean, S, innov, K = _update_core(mean, S, y, obs.H_eff, obs.R_eff)
        means[:, t, :] = mean
        covs[t] = S
        gains.append(K)
        innovations.append(innov)
    return FilterRun(means, covs, gains, innovations)
