"""Rating migration matrices: cohort estimation and the macro logit overlay.

The overlay tilts a through-the-cycle (TTC) matrix towards a point-in-time
(PIT) matrix for a scalar macro index ``m``::

    p_ij(m) = p_ij * exp(beta_ij * m) / sum_l p_il * exp(beta_il * m)

The default state is absorbing and is never tilted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyCohortRow,
    NonAbsorbingDefault,
    OverflowGuard,
    ValidationError,
)

ROW_SUM_TOL = 1e-12
DEFAULT_EXPONENT_CAP = 50.0
ORIENTATIONS = ("as-written", "adverse-positive")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _resolve_default(K: int, default_index: int | None) -> int:
    d = K - 1 if default_index is None else int(default_index)
    if not 0 <= d < K:
        raise ValidationError(f"default_index {d} out of range for K={K}")
    return d


@dataclass(frozen=True)
class MigrationCounts:
    counts: np.ndarray
    default_index: int | None = None

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionMismatch(f"counts must be square, got shape {c.shape}")
        if c.shape[0] < 2:
            raise ValidationError("need at least two rating states")
        if not np.all(np.isfinite(c)) or np.any(c < 0) or np.any(c != np.round(c)):
            raise ValidationError("counts must be nonnegative integers")
        c = np.array(c, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "default_index", _resolve_default(c.shape[0], self.default_index))

    @property
    def K(self) -> int:
        return self.counts.shape[0]


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic K x K matrix whose default row is the absorbing unit row."""

    entries: np.ndarray
    default_index: int | None = None

    def __post_init__(self):
        P = np.asarray(self.entries, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DimensionMismatch(f"transition matrix must be square, got {P.shape}")
        d = _resolve_default(P.shape[0], self.default_index)
        if not np.all(np.isfinite(P)) or np.any(P < 0.0) or np.any(P > 1.0):
            raise ValidationError("transition probabilities must lie in [0, 1]")
        drift = np.abs(P.sum(axis=1) - 1.0)
        if np.any(drift > ROW_SUM_TOL):
            bad = int(np.argmax(drift))
            raise ValidationError(f"row {bad} sums to {P[bad].sum():.17g}, not 1")
        unit = np.zeros(P.shape[0])
        unit[d] = 1.0
        if not np.array_equal(P[d], unit):
            raise ValidationError(f"default row {d} is not absorbing")
        object.__setattr__(self, "entries", _frozen(P))
        object.__setattr__(self, "default_index", d)

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, K: int, default_index: int | None = None) -> "TransitionMatrix":
        return cls(np.eye(K), default_index)


@dataclass(frozen=True)
class SensitivityMatrix:
    betas: np.ndarray
    default_index: int | None = None

    def __post_init__(self):
        B = np.asarray(self.betas, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise DimensionMismatch(f"sensitivity matrix must be square, got {B.shape}")
        d = _resolve_default(B.shape[0], self.default_index)
        if not np.all(np.isfinite(B)):
            raise ValidationError("sensitivities must be finite")
        if np.any(B[d] != 0.0):
            raise ValidationError("default row of the sensitivity matrix must be zero")
        object.__setattr__(self, "betas", _frozen(B))
        object.__setattr__(self, "default_index", d)

    @property
    def K(self) -> int:
        return self.betas.shape[0]

    @classmethod
    def zeros(cls, K: int, default_index: int | None = None) -> "SensitivityMatrix":
        return cls(np.zeros((K, K)), default_index)

    @classmethod
    def from_moves(
        cls,
        labels: Sequence[str],
        moves: Mapping[str, float],
        *,
        symmetric_upgrades: bool = True,
        orientation: str = "as-written",
    ) -> "SensitivityMatrix":
        """Build betas from ``{"A->B": 2.0, ...}``; unlisted moves are 0.

        With ``symmetric_upgrades`` every listed downgrade i->j (j below i,
        default excluded) also sets the upgrade j->i to the same value unless
        that upgrade is listed explicitly.
        """
        index = {lab: k for k, lab in enumerate(labels)}
        K = len(labels)
        B = np.zeros((K, K))
        explicit = set()
        for key, value in moves.items():
            try:
                src, dst = (s.strip() for s in key.split("->"))
                i, j = index[src], index[dst]
            except (ValueError, KeyError):
                raise ValidationError(f"bad move {key!r}; expected 'X->Y' over {list(labels)}")
            B[i, j] = float(value)
            explicit.add((i, j))
        if symmetric_upgrades:
            d = K - 1
            for (i, j) in list(explicit):
                if i < j < d and (j, i) not in explicit:
                    B[j, i] = B[i, j]
        if orientation not in ORIENTATIONS:
            raise ValidationError(f"macro_orientation must be one of {ORIENTATIONS}")
        if orientation == "adverse-positive":
            B = -B
        return cls(B)


def cohort_estimate(counts: MigrationCounts, force_absorbing: bool = True) -> TransitionMatrix:
    """Cohort (counting) estimator ``p_ij = N_ij / sum_j N_ij``.

    The default row is replaced by the absorbing unit row. If it carries
    mass off the default column and ``force_absorbing`` is False, raise
    NonAbsorbingDefault instead.
    """
    N = counts.counts
    d = counts.default_index
    sums = N.sum(axis=1)
    for i, s in enumerate(sums):
        if s == 0:
            raise EmptyCohortRow(i)
    off_default = N[d].sum() - N[d, d]
    if off_default and not force_absorbing:
        raise NonAbsorbingDefault(
            f"default row has {off_default} obligors leaving the default state"
        )
    P = N / sums[:, None]
    P[d] = 0.0
    P[d, d] = 1.0
    return TransitionMatrix(P, d)


def exact_cohort_rows(counts: MigrationCounts) -> list[list[Fraction]]:
    """Exact rational cohort estimate (no forced absorption); a test oracle."""
    rows = []
    for row in counts.counts.tolist():
        s = sum(row)
        rows.append([Fraction(n, s) for n in row])
    return rows


def read_counts_csv(path: str | Path) -> tuple[list[str], MigrationCounts]:
    """Read counts: header of K state labels, then K rows of K integers."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValidationError(f"{path}: empty counts file")
    labels = [c.strip() for c in rows[0]]
    body = rows[1:]
    if len(body) != len(labels) or any(len(r) != len(labels) for r in body):
        raise DimensionMismatch(f"{path}: expected {len(labels)} rows of {len(labels)} counts")
    try:
        data = [[int(c) for c in r] for r in body]
    except ValueError as exc:
        raise ValidationError(f"{path}: non-integer count ({exc})") from None
    return labels, MigrationCounts(np.array(data))


def _neumaier_rowsum(x: np.ndarray) -> np.ndarray:
    # compensated sum over the last axis, fixed left-to-right order
    s = np.zeros(x.shape[:-1])
    c = np.zeros(x.shape[:-1])
    for k in range(x.shape[-1]):
        v = x[..., k]
        t = s + v
        big = np.abs(s) >= np.abs(v)
        c = c + np.where(big, (s - t) + v, (v - t) + s)
        s = t
    return s + c


def overlay_batch(
    ttc: TransitionMatrix,
    betas: SensitivityMatrix,
    m: np.ndarray | float,
    exponent_cap: float = DEFAULT_EXPONENT_CAP,
) -> np.ndarray:
    """PIT matrices for an array of macro values; returns shape ``m.shape + (K, K)``.

    Rows whose exponents are all zero are returned as the TTC row unchanged,
    so ``m == 0`` reproduces the TTC matrix bit for bit.
    """
    if ttc.K != betas.K or ttc.default_index != betas.default_index:
        raise DimensionMismatch("TTC and sensitivity matrices disagree on K or default state")
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValidationError("macro index must be finite")
    P0, B, d = ttc.entries, betas.betas, ttc.default_index
    expo = B * m[..., None, None]
    worst = float(np.max(np.abs(expo))) if expo.size else 0.0
    if worst > exponent_cap:
        raise OverflowGuard(
            f"|beta * m| = {worst:.3g} exceeds the exponent cap {exponent_cap:g}"
        )
    raw = P0 * np.exp(expo)
    sums = _neumaier_rowsum(raw)
    if np.any(sums <= 0.0):
        raise OverflowGuard("overlay row mass underflowed to zero")
    out = raw / sums[..., None]
    untouched = np.all(expo == 0.0, axis=-1)
    out = np.where(untouched[..., None], P0, out)
    out[..., d, :] = 0.0
    out[..., d, d] = 1.0
    return out


def logit_overlay(
    ttc: TransitionMatrix,
    betas: SensitivityMatrix,
    m: float,
    exponent_cap: float = DEFAULT_EXPONENT_CAP,
) -> TransitionMatrix:
    """PIT transition matrix at macro index ``m``."""
    P = overlay_batch(ttc, betas, np.float64(m), exponent_cap)
    return TransitionMatrix(P, ttc.default_index)


def default_column_derivative(
    ttc: TransitionMatrix, betas: SensitivityMatrix, m: np.ndarray | float
) -> np.ndarray:
    """``d p_iK / dm`` for every row, closed form ``p_iK (beta_iK - sum_j beta_ij p_ij)``."""
    P = overlay_batch(ttc, betas, m)
    B = betas.betas
    d = ttc.default_index
    tilt = B[:, d] - np.sum(B * P, axis=-1)
    return P[..., :, d] * tilt


def overlay_default_sensitivity(
    ttc: TransitionMatrix, betas: SensitivityMatrix, pi, m: float
) -> float:
    """Derivative in ``m`` of the one-step default probability ``pi . G(m) . e_K``."""
    w = np.asarray(getattr(pi, "weights", pi), dtype=float)
    if w.shape != (ttc.K,):
        raise DimensionMismatch(f"distribution has shape {w.shape}, expected ({ttc.K},)")
    return float(w @ default_column_derivative(ttc, betas, m))


def sensitivity_lower_bound(
    ttc: TransitionMatrix, betas: SensitivityMatrix, m_lo: float, m_hi: float, n: int = 601
) -> float:
    """Smallest row-wise default-column derivative over a grid of ``[m_lo, m_hi]``.

    Positive only if every non-default row has TTC default mass and a
    positive tilt; then ``|phi(pi, m+d) - phi(pi, m)| >= bound * |d|`` for
    every distribution that puts no mass on the default state.
    """
    grid = np.linspace(m_lo, m_hi, n)
    D = default_column_derivative(ttc, betas, grid)
    keep = [i for i in range(ttc.K) if i != ttc.default_index]
    return float(np.min(D[:, keep]))
