"""TOML run configuration -> RunConfig.

Sections: ``[portfolio]``, ``[ttc]``, ``[betas]``, ``[composite]``,
``[macro_model]``, ``[anchor]``, ``[scenario.<name>]``, ``[experiment]``.
See ``configs/paper.toml`` for the full layout.
"""

from __future__ import annotations

import hashlib
import sys
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, LifetimePDError
from .experiment import RunConfig
from .kalman import AnchorConfig
from .macro import CompositeIndexParams, MacroStateModel, ScenarioSpec
from .propagation import RatingDistribution
from .ratings import MigrationCounts, SensitivityMatrix, TransitionMatrix, cohort_estimate, read_counts_csv

BUNDLED = ("paper.toml",)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("lifetime_pd") / "configs" / name))


def resolve_config_path(path: str | Path) -> Path:
    """The path itself if it exists, else a bundled config of that name."""
    p = Path(path)
    if p.is_file():
        return p
    if p.name in BUNDLED and str(p) == p.name:
        return bundled_path(p.name)
    raise ConfigError(f"config file not found: {path}")


def _get(table: dict, key: str, where: str, default: Any = ..., kind=None):
    if key not in table:
        if default is ...:
            raise ConfigError("missing required field", f"{where}.{key}")
        return default
    value = table[key]
    if kind is not None:
        try:
            value = kind(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value {table[key]!r} ({exc})", f"{where}.{key}") from None
    return value


def _section(doc: dict, name: str, required: bool = True) -> dict:
    if name not in doc:
        if required:
            raise ConfigError("missing section", f"[{name}]")
        return {}
    if not isinstance(doc[name], dict):
        raise ConfigError("expected a table", f"[{name}]")
    return doc[name]


def _wrap(where: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (LifetimePDError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), where) from None


def _pairs(value, where: str) -> list[tuple[int, float]]:
    try:
        return [(int(q), float(v)) for q, v in value]
    except (TypeError, ValueError):
        raise ConfigError("expected a list of [quarter, value] pairs", where) from None


def parse_config(doc: dict, base_dir: Path = Path(".")) -> RunConfig:
    port = _section(doc, "portfolio")
    labels = tuple(str(x) for x in _get(port, "labels", "portfolio"))
    if len(labels) < 2:
        raise ConfigError("need at least two rating states", "portfolio.labels")
    if "distribution" in port:
        pi0 = _wrap("portfolio.distribution", RatingDistribution, port["distribution"])
    else:
        counts = _get(port, "counts", "portfolio")
        pi0 = _wrap("portfolio.counts", RatingDistribution.from_counts, counts)
    if pi0.K != len(labels):
        raise ConfigError(f"{pi0.K} weights for {len(labels)} labels", "portfolio")
    portfolio_size = int(sum(port.get("counts", [])) or 10_000)

    ttc_sec = _section(doc, "ttc")
    if "matrix" in ttc_sec:
        ttc = _wrap("ttc.matrix", TransitionMatrix, ttc_sec["matrix"])
    elif "counts" in ttc_sec:
        ttc = _wrap("ttc.counts", lambda c: cohort_estimate(MigrationCounts(np.array(c))), ttc_sec["counts"])
    elif "counts_csv" in ttc_sec:
        path = base_dir / str(ttc_sec["counts_csv"])
        _, counts = _wrap("ttc.counts_csv", read_counts_csv, path)
        ttc = _wrap("ttc.counts_csv", cohort_estimate, counts)
    else:
        raise ConfigError("give one of matrix, counts or counts_csv", "[ttc]")
    if ttc.K != len(labels):
        raise ConfigError(f"matrix has {ttc.K} states, portfolio has {len(labels)}", "ttc")

    bsec = _section(doc, "betas")
    orientation = str(bsec.get("macro_orientation", "as-written"))
    if "matrix" in bsec:
        B = np.array(bsec["matrix"], dtype=float)
        if orientation == "adverse-positive":
            B = -B
        betas = _wrap("betas.matrix", SensitivityMatrix, B)
    else:
        moves = _get(bsec, "moves", "betas")
        if not isinstance(moves, dict):
            raise ConfigError("expected an inline table of 'X->Y' = beta", "betas.moves")
        betas = _wrap(
            "betas.moves",
            SensitivityMatrix.from_moves,
            labels,
            moves,
            symmetric_upgrades=bool(bsec.get("symmetric_upgrades", True)),
            orientation=orientation,
        )

    csec = _section(doc, "composite", required=False)
    composite = _wrap("composite", CompositeIndexParams, **{k: float(v) for k, v in csec.items()})

    msec = _section(doc, "macro_model")
    rho = _get(msec, "rho", "macro_model", kind=float)
    model = _wrap(
        "macro_model",
        MacroStateModel.scalar,
        rho,
        _get(msec, "Q", "macro_model", kind=float),
        _get(msec, "R", "macro_model", kind=float),
        _get(msec, "H", "macro_model", 1.0, kind=float),
    )

    asec = _section(doc, "anchor")
    m_star = _get(asec, "m_star", "anchor", 0.0, kind=float)
    model = _wrap("anchor.m_star", model.with_, M_star=[m_star])
    T_F = _get(asec, "forecast_horizon", "anchor", 20, kind=int)
    anchor = _wrap(
        "anchor",
        AnchorConfig,
        [m_star],
        _get(asec, "sigma_star_sq_in", "anchor", 0.25, kind=float),
        _get(asec, "sigma_star_sq_out", "anchor", 0.0, kind=float),
        T_F,
    )

    scen_doc = _section(doc, "scenario")
    scenarios = {}
    for name, sec in scen_doc.items():
        where = f"scenario.{name}"
        osc = sec.get("gdp_oscillation")
        if osc is not None:
            osc = (float(osc.get("amplitude", 0.0)), float(osc.get("period", 8.0)))
        overrides = {}
        for item in sec.get("overrides", []):
            try:
                q, dg, du = item
                overrides[int(q)] = (float(dg), float(du))
            except (TypeError, ValueError):
                raise ConfigError("expected [quarter, d_gdp, d_unemp] triples", f"{where}.overrides") from None
        scenarios[name] = _wrap(
            where,
            ScenarioSpec.from_anchors,
            name,
            T_F,
            _pairs(_get(sec, "gdp_anchors", where), f"{where}.gdp_anchors"),
            _pairs(_get(sec, "unemp_anchors", where), f"{where}.unemp_anchors"),
            gdp_oscillation=osc,
            overrides=overrides,
            noise_sigma_gdp=_get(sec, "noise_sigma_gdp", where, 0.2, kind=float),
            noise_sigma_unemp=_get(sec, "noise_sigma_unemp", where, 0.2, kind=float),
        )
    if not scenarios:
        raise ConfigError("at least one scenario is required", "[scenario]")

    esec = _section(doc, "experiment", required=False)
    q_out = esec.get("q_out", 0.0)
    fnv = esec.get("forecast_noise_var")
    return _wrap(
        "experiment",
        RunConfig,
        labels=labels,
        pi0=pi0,
        ttc=ttc,
        betas=betas,
        scenarios=scenarios,
        model=model,
        anchor=anchor,
        composite=composite,
        horizon_T=_get(esec, "horizon", "experiment", 40, kind=int),
        n_replications=_get(esec, "replications", "experiment", 200, kind=int),
        master_seed=_get(esec, "master_seed", "experiment", 20240601, kind=int),
        randomization_scope=str(esec.get("randomization_scope", "forecast-and-realized")),
        forecast_noise_var=None if fnv is None else float(fnv),
        tail_truth=str(esec.get("tail_truth", "neutral")),
        q_out=None if q_out is None else float(q_out),
        portfolio_size=portfolio_size,
    )


def load_config(path: str | Path) -> tuple[RunConfig, str]:
    """Parse a config file; returns the config and the sha256 of its bytes."""
    p = resolve_config_path(path)
    raw = p.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"not UTF-8 ({exc})", str(p)) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc), str(p)) from None
    return parse_config(doc, p.parent), hashlib.sha256(raw).hexdigest()


def default_config() -> RunConfig:
    return load_config(bundled_path("paper.toml"))[0]
