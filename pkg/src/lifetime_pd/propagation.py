"""Rating-distribution propagation and lifetime PD term structures."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ValidationError
from .ratings import SensitivityMatrix, TransitionMatrix, overlay_batch

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12
RENORM_THRESHOLD = 1e-13
DRIFT_WARNING = 1e-9


@dataclass(frozen=True)
class RatingDistribution:
    weights: np.ndarray
    default_index: int | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise DimensionMismatch(f"distribution must be a vector of length >= 2, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ValidationError("distribution weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ValidationError(f"distribution sums to {w.sum():.17g}, not 1")
        d = w.size - 1 if self.default_index is None else int(self.default_index)
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "default_index", d)

    @property
    def K(self) -> int:
        return self.weights.size

    @property
    def default_mass(self) -> float:
        return float(self.weights[self.default_index])

    @classmethod
    def from_counts(cls, counts: Sequence[int], default_index: int | None = None):
        c = np.asarray(counts, dtype=float)
        return cls(c / c.sum(), default_index)


@dataclass(frozen=True)
class PDTermStructure:
    """Cumulative default probabilities ``Y_1..Y_T`` (quarter index starts at 1)."""

    values: np.ndarray
    y0: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        if v.ndim != 1:
            raise DimensionMismatch("term structure must be one-dimensional")
        if np.any(v < 0.0) or np.any(v > 1.0 + SIMPLEX_TOL):
            raise ValidationError("cumulative PDs must lie in [0, 1]")
        if v.size > 1 and np.any(np.diff(v) < -SIMPLEX_TOL):
            raise ValidationError("cumulative PDs must be nondecreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def horizon(self) -> int:
        return self.values.size

    def to_csv(self, path: str | Path) -> None:
        write_term_structure_csv(path, self.values)


def _renormalise(w: np.ndarray) -> np.ndarray:
    s = w.sum(axis=-1, keepdims=True)
    drift = np.abs(s - 1.0)
    if np.any(drift > DRIFT_WARNING):
        log.warning("simplex drift %.3e during propagation", float(drift.max()))
    return np.where(drift > RENORM_THRESHOLD, w / s, w)


def _step(w: np.ndarray, P: np.ndarray) -> np.ndarray:
    # row vector(s) times matrix; explicit sum so batch size never changes rounding
    K = P.shape[-1]
    out = w[..., 0, None] * P[..., 0, :]
    for i in range(1, K):
        out = out + w[..., i, None] * P[..., i, :]
    return _renormalise(np.clip(out, 0.0, None))


def propagate_one(pi: RatingDistribution, p: TransitionMatrix) -> RatingDistribution:
    """One quarter of migration: ``pi . P``."""
    if pi.K != p.K or pi.default_index != p.default_index:
        raise DimensionMismatch(f"distribution over {pi.K} states vs matrix of size {p.K}")
    return RatingDistribution(_step(pi.weights, p.entries), pi.default_index)


def propagate_path(weights: np.ndarray, matrices: np.ndarray) -> np.ndarray:
    """Distributions ``pi_0..pi_T`` for matrices of shape ``(..., T, K, K)``.

    ``weights`` has shape ``(..., K)``; leading axes broadcast (one row per
    replication). Returns shape ``(..., T + 1, K)``.
    """
    w = np.asarray(weights, dtype=float)
    mats = np.asarray(matrices, dtype=float)
    if mats.shape[-1] != w.shape[-1] or mats.shape[-2] != w.shape[-1]:
        raise DimensionMismatch(f"distribution of size {w.shape[-1]} vs matrices {mats.shape}")
    T = mats.shape[-3]
    lead = np.broadcast_shapes(w.shape[:-1], mats.shape[:-3])
    out = np.empty(lead + (T + 1, w.shape[-1]))
    cur = np.broadcast_to(w, lead + w.shape[-1:])
    out[..., 0, :] = cur
    for t in range(T):
        cur = _step(cur, mats[..., t, :, :])
        out[..., t + 1, :] = cur
    return out


def lifetime_pd(
    pi0: RatingDistribution,
    matrices: Sequence[TransitionMatrix],
    include_y0: bool = False,
) -> PDTermStructure:
    """``Y_t = (pi_0 P_0 ... P_{t-1}) e_K`` for ``t = 1..T``."""
    for P in matrices:
        if P.K != pi0.K or P.default_index != pi0.default_index:
            raise DimensionMismatch("all matrices must share K and the default state with pi0")
    if not matrices:
        return PDTermStructure(np.zeros(0), pi0.default_mass if include_y0 else None)
    stack = np.stack([P.entries for P in matrices])
    path = propagate_path(pi0.weights, stack)
    Y = path[1:, pi0.default_index]
    return PDTermStructure(Y, pi0.default_mass if include_y0 else None)


def induced_norm_1to1(delta: np.ndarray) -> float:
    """Norm of ``x -> x . D`` on row vectors under l1: the largest row l1 norm."""
    return float(np.max(np.sum(np.abs(delta), axis=-1)))


def deviation_bound(e0: float, lipschitz_LG: float, deltas: Sequence[float]) -> np.ndarray:
    """Running bound ``b_t = e0 + L_G * sum_{s<t} |delta_s|`` for ``t = 1..T``."""
    if e0 < 0 or lipschitz_LG < 0:
        raise ValidationError("e0 and L_G must be nonnegative")
    d = np.abs(np.asarray(deltas, dtype=float))
    return e0 + lipschitz_LG * np.cumsum(d)


def estimate_lipschitz(
    ttc: TransitionMatrix,
    betas: SensitivityMatrix,
    m_lo: float = -3.0,
    m_hi: float = 3.0,
    step: float = 0.01,
    safety: float = 1.1,
) -> float:
    """Grid estimate of the overlay's Lipschitz constant in the 1->1 norm.

    Difference quotients ``||G(m+d) - G(m)|| / d`` with ``d = step`` over
    ``[m_lo, m_hi]``, maximised and inflated by ``safety``.
    """
    if not m_hi > m_lo or step <= 0:
        raise ValidationError("need m_hi > m_lo and a positive step")
    grid = np.arange(m_lo, m_hi + 0.5 * step, step)
    if np.all(betas.betas == 0.0):
        return 0.0
    G = overlay_batch(ttc, betas, grid)
    diffs = np.sum(np.abs(G[1:] - G[:-1]), axis=-1).max(axis=-1)
    return float(safety * np.max(diffs / np.diff(grid)))


def write_term_structure_csv(path: str | Path, values: Sequence[float], start: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "Y_t"])
        for k, y in enumerate(values):
            w.writerow([start + k, f"{float(y):.17g}"])
