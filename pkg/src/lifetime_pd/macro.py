"""Macroeconomic scenarios, the composite index and the latent AR(1) state.

Scenario forecast paths are piecewise linear between anchor quarters, with
an optional sinusoidal GDP oscillation (used by the baseline). Quarters are
indexed from 0.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, LengthMismatch, ValidationError
from .seeding import substream

SCENARIO_NAMES = ("baseline", "stress", "pandemic")


@dataclass(frozen=True)
class CompositeIndexParams:
    gdp_mean: float = 0.5
    gdp_std: float = 1.0
    unemp_mean: float = 5.5
    unemp_std: float = 1.0

    def __post_init__(self):
        if not (self.gdp_std > 0 and self.unemp_std > 0):
            raise ValidationError("standardisation std values must be positive")


def composite_index(gdp, unemp, params: CompositeIndexParams = CompositeIndexParams()) -> np.ndarray:
    """``M_t = z(g_t)/2 - z(u_t)/2`` with fixed standardisation constants."""
    g = np.asarray(gdp, dtype=float)
    u = np.asarray(unemp, dtype=float)
    if g.shape != u.shape:
        raise LengthMismatch(f"gdp has shape {g.shape}, unemployment {u.shape}")
    zg = (g - params.gdp_mean) / params.gdp_std
    zu = (u - params.unemp_mean) / params.unemp_std
    return 0.5 * zg - 0.5 * zu


def piecewise_linear(anchors: Sequence[tuple[int, float]], T: int) -> np.ndarray:
    """Values at quarters ``0..T-1`` interpolated through ``(quarter, value)`` anchors.

    Flat extrapolation outside the first/last anchor.
    """
    pts = sorted((int(q), float(v)) for q, v in anchors)
    if not pts:
        raise ValidationError("need at least one anchor point")
    qs = [q for q, _ in pts]
    if len(set(qs)) != len(qs):
        raise ValidationError(f"duplicate anchor quarters in {qs}")
    return np.interp(np.arange(T), qs, [v for _, v in pts])


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    gdp_forecast: np.ndarray
    unemp_forecast: np.ndarray
    realized_overrides: Mapping[int, tuple[float, float]] = field(default_factory=dict)
    noise_sigma_gdp: float = 0.2
    noise_sigma_unemp: float = 0.2

    def __post_init__(self):
        g = np.asarray(self.gdp_forecast, dtype=float)
        u = np.asarray(self.unemp_forecast, dtype=float)
        if g.ndim != 1 or g.shape != u.shape or g.size < 1:
            raise LengthMismatch("forecast paths must be 1-D sequences of equal, nonzero length")
        if self.noise_sigma_gdp < 0 or self.noise_sigma_unemp < 0:
            raise ValidationError("noise sigmas must be nonnegative")
        for t in self.realized_overrides:
            if not 0 <= int(t) < g.size:
                raise ValidationError(f"override quarter {t} outside the forecast window")
        g.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "gdp_forecast", g)
        object.__setattr__(self, "unemp_forecast", u)
        object.__setattr__(
            self,
            "realized_overrides",
            {int(t): (float(dg), float(du)) for t, (dg, du) in self.realized_overrides.items()},
        )

    @property
    def T_F(self) -> int:
        return self.gdp_forecast.size

    @classmethod
    def from_anchors(
        cls,
        name: str,
        T_F: int,
        gdp_anchors,
        unemp_anchors,
        *,
        gdp_oscillation: tuple[float, float] | None = None,
        overrides: Mapping[int, tuple[float, float]] | None = None,
        noise_sigma_gdp: float = 0.2,
        noise_sigma_unemp: float = 0.2,
    ) -> "ScenarioSpec":
        gdp = piecewise_linear(gdp_anchors, T_F)
        if gdp_oscillation is not None:
            amplitude, period = gdp_oscillation
            gdp = gdp + amplitude * np.sin(2.0 * math.pi * np.arange(T_F) / period)
        unemp = piecewise_linear(unemp_anchors, T_F)
        return cls(name, gdp, unemp, dict(overrides or {}), noise_sigma_gdp, noise_sigma_unemp)


def default_scenarios(T_F: int = 20) -> dict[str, ScenarioSpec]:
    """The three stylised scenarios with this package's default shapes."""
    last = T_F - 1
    return {
        "baseline": ScenarioSpec.from_anchors(
            "baseline", T_F, [(0, 0.5)], [(0, 5.5)], gdp_oscillation=(0.2, 8.0)
        ),
        "stress": ScenarioSpec.from_anchors(
            "stress",
            T_F,
            [(0, 0.5), (1, -2.0), (12, 0.5), (last, 0.5)],
            [(0, 5.5), (5, 7.5), (9, 7.5), (last, 5.5)],
            overrides={1: (-0.5, 0.0), 5: (0.0, 0.5)},
        ),
        "pandemic": ScenarioSpec.from_anchors(
            "pandemic",
            T_F,
            [(0, 0.5), (1, 0.5), (2, -8.0), (3, 6.0), (4, 0.5), (last, 0.5)],
            [(0, 5.5), (1, 5.5), (2, 9.5), (6, 5.5), (last, 5.5)],
            overrides={3: (2.0, 0.0)},
        ),
    }


@dataclass(frozen=True)
class ScenarioPaths:
    """Forecast and one realisation of a scenario, all of length ``T_F``."""

    gdp_forecast: np.ndarray
    unemp_forecast: np.ndarray
    gdp_realized: np.ndarray
    unemp_realized: np.ndarray
    M_forecast: np.ndarray
    M_realized: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        cols = ["gdp_forecast", "unemp_forecast", "gdp_realized", "unemp_realized",
                "M_forecast", "M_realized"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *cols])
            for t in range(self.M_forecast.size):
                w.writerow([t, *(f"{float(getattr(self, c)[t]):.17g}" for c in cols)])


def realize_scenario(
    spec: ScenarioSpec,
    rng: np.random.Generator,
    params: CompositeIndexParams = CompositeIndexParams(),
) -> ScenarioPaths:
    """Forecast paths plus overrides plus Gaussian noise; draws GDP noise then unemployment noise."""
    T = spec.T_F
    dg = np.zeros(T)
    du = np.zeros(T)
    for t, (og, ou) in spec.realized_overrides.items():
        dg[t] += og
        du[t] += ou
    eps_g = rng.standard_normal(T) * spec.noise_sigma_gdp
    eps_u = rng.standard_normal(T) * spec.noise_sigma_unemp
    g_real = spec.gdp_forecast + dg + eps_g
    u_real = spec.unemp_forecast + du + eps_u
    return ScenarioPaths(
        spec.gdp_forecast,
        spec.unemp_forecast,
        g_real,
        u_real,
        composite_index(spec.gdp_forecast, spec.unemp_forecast, params),
        composite_index(g_real, u_real, params),
    )


def generate_scenario(
    spec: ScenarioSpec,
    seed: int,
    params: CompositeIndexParams = CompositeIndexParams(),
) -> tuple[np.ndarray, np.ndarray]:
    """``(forecast_index, realized_index)``; the noise stream is keyed by (seed, scenario name)."""
    paths = realize_scenario(spec, substream(seed, spec.name), params)
    return paths.M_forecast, paths.M_realized


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix")
    return a


def _pbh_ok(A: np.ndarray, B: np.ndarray, *, observe: bool, tol: float = 1e-10) -> bool:
    # Popov-Belevitch-Hautus test on the non-strictly-stable modes
    r = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0:
            continue
        shifted = A - lam * np.eye(r)
        M = np.vstack([shifted, B]) if observe else np.hstack([shifted, B])
        if np.linalg.matrix_rank(M, tol=tol) < r:
            return False
    return True


@dataclass(frozen=True)
class MacroStateModel:
    """``M_{t+1} = A M_t + w``, ``w ~ N(0, Q)``; forecast ``y = H M + v``, ``v ~ N(0, R)``."""

    A: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray
    M_star: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        Q = _as_matrix(self.Q, "Q")
        H = _as_matrix(self.H, "H")
        R = _as_matrix(self.R, "R")
        m = np.atleast_1d(np.asarray(self.M_star, dtype=float))
        r = A.shape[0]
        if A.shape != (r, r) or Q.shape != (r, r) or H.shape[1] != r:
            raise DimensionMismatch("A and Q must be r x r and H must have r columns")
        p = H.shape[0]
        if R.shape != (p, p) or m.shape != (r,):
            raise DimensionMismatch("R must be p x p and M_star of length r")
        for name, S in (("Q", Q), ("R", R)):
            if not np.allclose(S, S.T, atol=1e-12, rtol=0):
                raise ValidationError(f"{name} must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ValidationError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ValidationError("R must be positive definite")
        for name, a in (("A", A), ("Q", Q), ("H", H), ("R", R), ("M_star", m)):
            a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not self.stabilizable():
            warnings.warn("(A, Q^1/2) is not stabilizable", RuntimeWarning, stacklevel=2)
        if not self.detectable():
            warnings.warn("(A, H) is not detectable", RuntimeWarning, stacklevel=2)

    @classmethod
    def scalar(cls, rho: float = 0.9, Q: float = 0.19, R: float = 0.25,
               H: float = 1.0, m_star: float = 0.0) -> "MacroStateModel":
        return cls([[rho]], [[Q]], [[H]], [[R]], [m_star])

    @property
    def r(self) -> int:
        return self.A.shape[0]

    def with_(self, **changes) -> "MacroStateModel":
        fields = {k: getattr(self, k) for k in ("A", "Q", "H", "R", "M_star")}
        fields.update(changes)
        return MacroStateModel(**fields)

    def stabilizable(self) -> bool:
        w, V = np.linalg.eigh(self.Q)
        sqrtQ = V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T
        return _pbh_ok(self.A, sqrtQ, observe=False)

    def detectable(self, H: np.ndarray | None = None) -> bool:
        return _pbh_ok(self.A, self.H if H is None else np.atleast_2d(H), observe=True)

    def stationary_covariance(self) -> np.ndarray:
        """Solution of ``S = A S A' + Q`` (requires a Schur ``A``)."""
        from scipy.linalg import solve_discrete_lyapunov

        return solve_discrete_lyapunov(self.A, self.Q)


def simulate_truth(
    model: MacroStateModel,
    seed: int | np.random.Generator,
    T: int,
    init,
    n_paths: int | None = None,
) -> np.ndarray:
    """AR(1) paths ``M_0..M_T``; shape ``(T+1, r)``, or ``(n_paths, T+1, r)`` when batched."""
    if T < 1:
        raise ValidationError("T must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "truth")
    r = model.r
    x0 = np.atleast_1d(np.asarray(init, dtype=float))
    if x0.shape != (r,):
        raise DimensionMismatch(f"init must have length {r}")
    batch = () if n_paths is None else (int(n_paths),)
    w_eig, V = np.linalg.eigh(model.Q)
    sqrtQ = V @ np.diag(np.sqrt(np.clip(w_eig, 0.0, None)))
    out = np.empty(batch + (T + 1, r))
    cur = np.broadcast_to(x0, batch + (r,)).copy()
    out[..., 0, :] = cur
    for t in range(T):
        z = rng.standard_normal(batch + (r,))
        cur = cur @ model.A.T + z @ sqrtQ.T
        out[..., t + 1, :] = cur
    return out
