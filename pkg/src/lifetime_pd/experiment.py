"""Monte Carlo comparison of raw, naive and anchored PD propagation.

Per replication the data are drawn once and shared by all three methods
(common random numbers): realised macro noise for the truth, then forecast
noise for the observed forecast. Streams are keyed by
(master_seed, scenario, replication), so results do not depend on how
replications are batched or spread over threads.

Beyond the forecast window the observed forecast is the neutral level plus
the same forecast noise, and the truth is the neutral level (``tail_truth =
"neutral"``) or an AR(1) continuation of the last realised value
(``"ar1"``).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .kalman import AnchorConfig, run_filter
from .macro import CompositeIndexParams, MacroStateModel, ScenarioSpec, composite_index, realize_scenario
from .propagation import PDTermStructure, RatingDistribution, propagate_path
from .ratings import DEFAULT_EXPONENT_CAP, SensitivityMatrix, TransitionMatrix, overlay_batch
from .seeding import substream

METHODS = ("raw", "naive", "anchored")
SCOPES = ("realized-only", "forecast-and-realized")
TAIL_TRUTHS = ("neutral", "ar1")


@dataclass(frozen=True)
class RunConfig:
    labels: tuple[str, ...]
    pi0: RatingDistribution
    ttc: TransitionMatrix
    betas: SensitivityMatrix
    scenarios: dict[str, ScenarioSpec]
    model: MacroStateModel
    anchor: AnchorConfig
    composite: CompositeIndexParams = CompositeIndexParams()
    horizon_T: int = 40
    n_replications: int = 200
    master_seed: int = 20240601
    randomization_scope: str = "forecast-and-realized"
    forecast_noise_var: float | None = None
    tail_truth: str = "neutral"
    q_out: float | None = 0.0
    portfolio_size: int = 10_000
    exponent_cap: float = DEFAULT_EXPONENT_CAP

    def __post_init__(self):
        if self.horizon_T < self.anchor.forecast_horizon_TF:
            raise ValidationError("horizon_T must be at least the forecast horizon T_F")
        if self.n_replications < 1:
            raise ValidationError("n_replications must be at least 1")
        if self.randomization_scope not in SCOPES:
            raise ValidationError(f"randomization_scope must be one of {SCOPES}")
        if self.tail_truth not in TAIL_TRUTHS:
            raise ValidationError(f"tail_truth must be one of {TAIL_TRUTHS}")
        if self.model.r != 1:
            raise ValidationError("the experiment drives the overlay with a scalar macro index")
        for name, spec in self.scenarios.items():
            if spec.T_F != self.anchor.forecast_horizon_TF:
                raise ValidationError(f"scenario {name!r} has {spec.T_F} forecast quarters, expected T_F")

    @property
    def T_F(self) -> int:
        return self.anchor.forecast_horizon_TF

    @property
    def m_star(self) -> float:
        return float(self.anchor.m_star[0])

    @property
    def noise_var(self) -> float:
        if self.forecast_noise_var is not None:
            return float(self.forecast_noise_var)
        return float(self.model.R[0, 0])

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


@dataclass
class ScenarioDraw:
    """Shared inputs for a batch of replications, each array shaped ``(n, T)``."""

    replications: np.ndarray
    truth: np.ndarray
    observed: np.ndarray
    forecast_index: np.ndarray


def draw_inputs(config: RunConfig, scenario: str, replications: Sequence[int]) -> ScenarioDraw:
    spec = config.scenarios[scenario]
    T, T_F = config.horizon_T, config.T_F
    reps = np.asarray(list(replications), dtype=int)
    truth = np.empty((reps.size, T))
    observed = np.empty((reps.size, T))
    base = np.full(T, config.m_star)
    rho = float(config.model.A[0, 0])
    sq = math.sqrt(float(config.model.Q[0, 0]))
    for row, k in enumerate(reps):
        rng = substream(config.master_seed, scenario, int(k))
        paths = realize_scenario(spec, rng, config.composite)
        base[:T_F] = paths.M_forecast
        noise = rng.standard_normal(T) * math.sqrt(config.noise_var)
        if config.randomization_scope == "realized-only":
            noise[:] = 0.0
        observed[row] = base + noise
        truth[row, :T_F] = paths.M_realized
        if config.tail_truth == "neutral":
            truth[row, T_F:] = config.m_star
        else:
            w = rng.standard_normal(T - T_F) * sq
            cur = paths.M_realized[-1] - config.m_star
            for t in range(T_F, T):
                cur = rho * cur + w[t - T_F]
                truth[row, t] = config.m_star + cur
    return ScenarioDraw(reps, truth, observed, np.broadcast_to(base, (reps.size, T)).copy())


def macro_estimates(config: RunConfig, method: str, observed: np.ndarray) -> np.ndarray:
    """Macro index fed to the overlay at each quarter, shape ``(n, T)``."""
    if method == "raw":
        return observed.copy()
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}")
    q_out = None if config.q_out is None else np.array([[config.q_out]])
    run = run_filter(config.model, observed, method, config.anchor, q_out=q_out)
    return run.means[..., 0]


def pd_paths(config: RunConfig, m: np.ndarray) -> np.ndarray:
    """Cumulative PDs ``Y_1..Y_T`` for each row of macro indices ``m (n, T)``."""
    P = overlay_batch(config.ttc, config.betas, m, config.exponent_cap)
    dist = propagate_path(config.pi0.weights, P)
    return dist[..., 1:, config.pi0.default_index]


def simulate_batch(
    config: RunConfig, scenario: str, replications: Sequence[int], methods: Iterable[str] = METHODS
) -> tuple[ScenarioDraw, dict[str, tuple[np.ndarray, np.ndarray]]]:
    draw = draw_inputs(config, scenario, replications)
    out = {}
    for method in methods:
        m = macro_estimates(config, method, draw.observed)
        out[method] = (pd_paths(config, m), m)
    return draw, out


def run_method(method: str, scenario: str, config: RunConfig, replication: int):
    """One replication of one method: ``(PDTermStructure, macro estimate path)``."""
    _, out = simulate_batch(config, scenario, [replication], [method])
    Y, m = out[method]
    return PDTermStructure(Y[0]), m[0]


def _fsum_mean(x: np.ndarray) -> float:
    return math.fsum(x.ravel().tolist()) / x.size


def _column_variance(Y: np.ndarray) -> np.ndarray:
    # population variance across replications, compensated and order-free
    n = Y.shape[0]
    out = np.empty(Y.shape[1])
    for t in range(Y.shape[1]):
        col = Y[:, t].tolist()
        if min(col) == max(col):
            out[t] = 0.0
            continue
        mu = math.fsum(col) / n
        out[t] = math.fsum((v - mu) ** 2 for v in col) / n
    return out


@dataclass
class MethodResult:
    scenario: str
    method: str
    pd_paths: np.ndarray
    macro_estimates: np.ndarray
    truth: np.ndarray
    var_Yt: np.ndarray = field(init=False)
    mean_var_Yt: float = field(init=False)
    mean_YT: float = field(init=False)
    std_YT: float = field(init=False)
    macro_rmse: float = field(init=False)

    def __post_init__(self):
        self.var_Yt = _column_variance(self.pd_paths)
        self.mean_var_Yt = math.fsum(self.var_Yt.tolist()) / self.var_Yt.size
        self.mean_YT = _fsum_mean(self.pd_paths[:, -1])
        self.std_YT = math.sqrt(float(_column_variance(self.pd_paths[:, -1:])[0]))
        self.macro_rmse = math.sqrt(_fsum_mean((self.macro_estimates - self.truth) ** 2))

    @property
    def n_replications(self) -> int:
        return self.pd_paths.shape[0]

    @property
    def mean_path(self) -> np.ndarray:
        n = self.pd_paths.shape[0]
        return np.array([math.fsum(self.pd_paths[:, t].tolist()) / n for t in range(self.pd_paths.shape[1])])


@dataclass
class MonteCarloResult:
    cells: dict[tuple[str, str], MethodResult]
    scenarios: tuple[str, ...]
    methods: tuple[str, ...]

    def pooled_mean_variance(self) -> dict[str, float]:
        """Mean variance of ``Y_t`` per method, equal-weighted over scenarios."""
        return {
            m: math.fsum(self.cells[(s, m)].mean_var_Yt for s in self.scenarios) / len(self.scenarios)
            for m in self.methods
        }

    def rows(self) -> list[dict]:
        return [
            {
                "scenario": s,
                "method": m,
                "mean_var_Yt": c.mean_var_Yt,
                "mean_YT": c.mean_YT,
                "std_YT": c.std_YT,
                "macro_rmse": c.macro_rmse,
            }
            for (s, m), c in self.cells.items()
        ]


def _chunks(n: int, k: int) -> list[range]:
    k = max(1, min(k, n))
    edges = np.linspace(0, n, k + 1).astype(int)
    return [range(a, b) for a, b in zip(edges[:-1], edges[1:])]


def monte_carlo(
    config: RunConfig,
    threads: int = 1,
    scenarios: Sequence[str] | None = None,
    methods: Sequence[str] = METHODS,
) -> MonteCarloResult:
    scenarios = tuple(scenarios or config.scenarios)
    methods = tuple(methods)
    jobs = [(s, chunk) for s in scenarios for chunk in _chunks(config.n_replications, threads)]

    def work(job):
        s, chunk = job
        return simulate_batch(config, s, chunk, methods)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    cells = {}
    for s in scenarios:
        parts = [r for (js, _), r in zip(jobs, results) if js == s]
        truth = np.concatenate([d.truth for d, _ in parts])
        for m in methods:
            Y = np.concatenate([o[m][0] for _, o in parts])
            est = np.concatenate([o[m][1] for _, o in parts])
            cells[(s, m)] = MethodResult(s, m, Y, est, truth)
    return MonteCarloResult(cells, scenarios, methods)


def robustness_sweep(
    config: RunConfig,
    rhos: Sequence[float] = (0.80, 0.90, 0.95),
    Rs: Sequence[float] = (0.1, 0.25, 0.5),
    n_replications: int | None = None,
) -> list[dict]:
    """Pooled variance ordering over a grid of persistence and forecast noise."""
    rows = []
    for rho in rhos:
        for R in Rs:
            model = config.model.with_(A=[[rho]], R=[[R]])
            cfg = config.with_(model=model, n_replications=n_replications or config.n_replications)
            pooled = monte_carlo(cfg).pooled_mean_variance()
            rows.append({"rho": rho, "R": R, **pooled,
                         "ordered": pooled["anchored"] < pooled["naive"] < pooled["raw"]})
    return rows


# --- statistical demonstrations -------------------------------------------------------


def _phi(config: RunConfig, dist: np.ndarray, m: np.ndarray) -> np.ndarray:
    """One-step default probability ``pi . G(m) . e_K`` for batched ``dist (..., K)``."""
    d = config.pi0.default_index
    P = overlay_batch(config.ttc, config.betas, m, config.exponent_cap)
    return np.sum(dist * P[..., :, d], axis=-1)


@dataclass
class InstabilityResult:
    block_edges: list[tuple[int, int]]
    one_step_frequency: np.ndarray
    cumulative_frequency: np.ndarray
    threshold: float

    @property
    def late_frequency(self) -> float:
        return float(self.one_step_frequency[-1])


def inject_deltas(rng: np.random.Generator, shape, epsilon: float, p: float) -> np.ndarray:
    """I.i.d. errors equal to ``+-epsilon`` with probability ``p`` and 0 otherwise."""
    hit = rng.random(shape) < p
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return np.where(hit, sign * epsilon, 0.0)


def instability_demo(
    config: RunConfig,
    epsilon: float,
    alpha_probe: float,
    p: float = 0.3,
    method: str = "raw",
    n_paths: int = 500,
    block: int = 5,
    seed: int | None = None,
) -> InstabilityResult:
    """Exceedance frequencies of PD deviations caused by injected forecast errors.

    The true macro path is the neutral level. For each quarter the one-step
    deviation ``|phi(pi_t, m_t) - phi(pi_t, M*)|`` (same distribution, macro
    input with versus without error) is compared with ``alpha_probe *
    epsilon``; the cumulative deviation ``|Y_t - Y°_t|`` against the
    error-free path is reported alongside.
    """
    T = config.horizon_T
    rng = substream(config.master_seed if seed is None else seed, "instability", method)
    deltas = inject_deltas(rng, (n_paths, T), epsilon, p)
    observed = config.m_star + deltas
    m = macro_estimates(config, method, observed)
    P = overlay_batch(config.ttc, config.betas, m, config.exponent_cap)
    dist = propagate_path(config.pi0.weights, P)
    d = config.pi0.default_index
    neutral = np.full((1, T), config.m_star)
    dist0 = propagate_path(config.pi0.weights, overlay_batch(config.ttc, config.betas, neutral))
    one_step = np.abs(np.sum(dist[:, :-1, :] * P[..., :, d], axis=-1) - _phi(config, dist[:, :-1, :], neutral[0]))
    cumulative = np.abs(dist[:, 1:, d] - dist0[:, 1:, d])
    thr = alpha_probe * epsilon
    edges = [(a, min(a + block, T)) for a in range(0, T, block)]
    f1 = np.array([np.mean(one_step[:, a:b] >= thr) for a, b in edges])
    fc = np.array([np.mean(cumulative[:, a:b] >= thr) for a, b in edges])
    return InstabilityResult(edges, f1, fc, thr)


def min_path_sensitivity(config: RunConfig, horizon: int | None = None) -> float:
    """Smallest ``d phi / dm`` at the neutral level along the error-free path."""
    from .ratings import default_column_derivative

    T = horizon or config.horizon_T
    neutral = np.full((1, T), config.m_star)
    dist0 = propagate_path(config.pi0.weights, overlay_batch(config.ttc, config.betas, neutral))[0]
    D = default_column_derivative(config.ttc, config.betas, config.m_star)
    return float(np.min(dist0[:T] @ D))


@dataclass
class BoundCheckResult:
    fraction: float
    min_slack: float
    lipschitz: float
    deviations: np.ndarray
    bounds: np.ndarray


def bound_check(
    config: RunConfig,
    n_paths: int = 1000,
    sigma_delta: float | None = None,
    deltas: np.ndarray | None = None,
    m_range: tuple[float, float] = (-3.0, 3.0),
    seed: int | None = None,
) -> BoundCheckResult:
    """Check ``||pi_t - pi°_t||_1 <= L_G sum_{s<t} |delta_s|`` on sampled error paths.

    The error-free macro path is the baseline forecast extended at the
    neutral level; perturbed inputs are clipped to ``m_range`` (where the
    Lipschitz constant was estimated) and the clipped error is the one used
    in the bound.
    """
    from .propagation import deviation_bound, estimate_lipschitz

    T, T_F = config.horizon_T, config.T_F
    L = estimate_lipschitz(config.ttc, config.betas, *m_range)
    base = np.full(T, config.m_star)
    spec = config.scenarios.get("baseline") or next(iter(config.scenarios.values()))
    base[:T_F] = composite_index(spec.gdp_forecast, spec.unemp_forecast, config.composite)
    base = np.clip(base, *m_range)
    if deltas is None:
        rng = substream(config.master_seed if seed is None else seed, "bound_check")
        s = math.sqrt(config.noise_var) if sigma_delta is None else sigma_delta
        deltas = rng.standard_normal((n_paths, T)) * s
    deltas = np.atleast_2d(deltas)
    perturbed = np.clip(base + deltas, *m_range)
    eff = perturbed - base
    dist = propagate_path(config.pi0.weights, overlay_batch(config.ttc, config.betas, perturbed))
    dist0 = propagate_path(config.pi0.weights, overlay_batch(config.ttc, config.betas, base[None, :]))
    dev = np.sum(np.abs(dist - dist0), axis=-1)[:, 1:]
    bounds = np.array([deviation_bound(0.0, L, row) for row in eff])
    ok = np.all(dev <= bounds + 1e-15, axis=1)
    return BoundCheckResult(float(np.mean(ok)), float(np.min(bounds - dev)), L, dev, bounds)


def naive_residual_deviation(
    config: RunConfig, n_paths: int = 400, T: int = 160, seed: int | None = None
) -> np.ndarray:
    """Mean over paths of ``|phi(pi_t, mu_t) - phi(pi_t, M_t)|`` under naive filtering.

    Truth is the AR(1) model started at the neutral level, observed through
    ``y = H M + v``; returns one value per quarter.
    """
    from .macro import simulate_truth

    model = config.model
    rng = substream(config.master_seed if seed is None else seed, "naive_residual")
    truth = simulate_truth(model, rng, T, model.M_star, n_paths=n_paths)[:, 1:, 0]
    y = truth * model.H[0, 0] + rng.standard_normal((n_paths, T)) * math.sqrt(model.R[0, 0])
    mu = run_filter(model, y, "naive").means[..., 0]
    P = overlay_batch(config.ttc, config.betas, mu, config.exponent_cap)
    dist = propagate_path(config.pi0.weights, P)[:, :-1, :]
    d = config.pi0.default_index
    dev = np.abs(np.sum(dist * P[..., :, d], axis=-1) - _phi(config, dist, truth))
    return dev.mean(axis=0)
