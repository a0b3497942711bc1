"""Command-line front end.

    lifetime-pd run --config paper.toml --out results/ [--seed N] [--reps N]
                    [--method raw|naive|anchored|all] [--scenario NAME|all]
                    [--threads N] [--emit-traces]
    lifetime-pd scenarios --config paper.toml --out scen/
    lifetime-pd riccati --config paper.toml
    lifetime-pd demo-instability --config paper.toml [--out DIR]
    lifetime-pd check-bounds --config paper.toml [--out DIR]

Exit status: 0 success, 1 runtime failure, 2 usage error, 3 config error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, resolve_config_path
from .errors import ConfigError, LifetimePDError
from .experiment import METHODS, RunConfig, bound_check, draw_inputs, instability_demo, min_path_sensitivity, monte_carlo
from .kalman import anchored_observation, naive_observation, riccati_steady_state, run_filter
from .macro import realize_scenario
from .seeding import substream

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3


def fmt(x) -> str:
    return f"{float(x):.17g}"


def _positive(kind):
    def parse(text: str):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a {kind.__name__}, got {text!r}") from None
        if v < 1:
            raise argparse.ArgumentTypeError("must be at least 1")
        return v

    return parse


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lifetime-pd", description="Lifetime PD scenario engine")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", required=True, help="TOML run configuration (or a bundled name)")
        p.add_argument("--out", required=out_required, type=Path, help="output directory")
        p.add_argument("--seed", type=_seed, help="override the master seed")
        p.add_argument("--threads", type=_positive(int), default=os.cpu_count() or 1)

    run = sub.add_parser("run", help="Monte Carlo comparison of the three methods")
    common(run, out_required=True)
    run.add_argument("--reps", type=_positive(int))
    run.add_argument("--method", choices=[*METHODS, "all"], default="all")
    run.add_argument("--scenario", default="all")
    run.add_argument("--emit-traces", action="store_true", help="write per-replication PD paths")

    scen = sub.add_parser("scenarios", help="write forecast and realised scenario paths")
    common(scen, out_required=True)
    scen.add_argument("--scenario", default="all")

    ric = sub.add_parser("riccati", help="steady-state filter diagnostics")
    common(ric)

    demo = sub.add_parser("demo-instability", help="exceedance frequencies under injected forecast errors")
    common(demo)
    demo.add_argument("--epsilon", type=float, default=0.5)
    demo.add_argument("--p", type=float, default=0.3)
    demo.add_argument("--paths", type=_positive(int), default=500)

    bounds = sub.add_parser("check-bounds", help="check the accumulated deviation bound on random paths")
    common(bounds)
    bounds.add_argument("--paths", type=_positive(int), default=1000)
    return parser


def _select(requested: str, available, what: str) -> tuple[str, ...]:
    if requested == "all":
        return tuple(available)
    if requested not in available:
        raise ConfigError(f"unknown {what} {requested!r}; choose from {', '.join(available)}", f"--{what}")
    return (requested,)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _manifest(out: Path, args, config: RunConfig, digest: str, extra: dict) -> None:
    path = resolve_config_path(args.config)
    lines = [
        f"tool: lifetime-pd {__version__}",
        f"command: {args.command}",
        f"config: {args.config}",
        f"config_sha256: {digest}",
        f"master_seed: {config.master_seed}",
        f"n_replications: {config.n_replications}",
        f"horizon_T: {config.horizon_T}",
        f"randomization_scope: {config.randomization_scope}",
    ]
    lines += [f"{k}: {v}" for k, v in extra.items()]
    lines += ["", "# resolved configuration file", path.read_text(encoding="utf-8").rstrip("\n")]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _scenario_csvs(out: Path, config: RunConfig, names) -> None:
    for name in names:
        # replication 0 realisation, the same one the Monte Carlo uses
        paths = realize_scenario(config.scenarios[name], substream(config.master_seed, name, 0), config.composite)
        paths.to_csv(out / f"macro_{name}.csv")


def cmd_run(args, config: RunConfig, digest: str) -> int:
    scenarios = _select(args.scenario, list(config.scenarios), "scenario")
    methods = _select(args.method, METHODS, "method")
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    result = monte_carlo(config, threads=args.threads, scenarios=scenarios, methods=methods)

    cols = ["scenario", "method", "mean_var_Yt", "mean_YT", "std_YT", "macro_rmse"]
    _write_rows(out / "summary.csv", cols,
                [[r["scenario"], r["method"], *(fmt(r[c]) for c in cols[2:])] for r in result.rows()])

    for (s, m), cell in result.cells.items():
        mean = cell.mean_path
        _write_rows(out / f"pd_{s}_{m}.csv", ["t", "mean_Y_t", "var_Y_t"],
                    [[t + 1, fmt(mean[t]), fmt(cell.var_Yt[t])] for t in range(mean.size)])
        if args.emit_traces:
            T = cell.pd_paths.shape[1]
            _write_rows(out / f"traces_{s}_{m}.csv", ["replication", *(f"Y_{t}" for t in range(1, T + 1))],
                        [[k, *map(fmt, row)] for k, row in enumerate(cell.pd_paths)])
    _scenario_csvs(out, config, scenarios)
    _filter_traces(out, config, result, scenarios, methods)

    _manifest(out, args, config, digest, {"scenarios": ",".join(scenarios), "methods": ",".join(methods)})
    pooled = result.pooled_mean_variance()
    print("mean variance of Y_t (pooled over scenarios):")
    for m in methods:
        print(f"  {m:9s} {pooled[m]:.6g}")
    print(f"wrote {len(result.cells)} cells to {out}")
    return EXIT_OK


def _filter_traces(out: Path, config: RunConfig, result, scenarios, methods) -> None:
    """Filter trace of replication 0 for each filtered method."""
    q_out = None if config.q_out is None else np.array([[config.q_out]])
    for s in scenarios:
        for m in methods:
            if m == "raw":
                continue
            draw = draw_inputs(config, s, [0])
            run = run_filter(config.model, draw.observed, m, config.anchor, q_out=q_out)
            rows = []
            for t in range(config.horizon_T):
                rows.append([t, fmt(run.means[0, t, 0]), fmt(np.sqrt(run.covs[t, 0, 0])),
                             fmt(run.innovations[t][0, 0]), fmt(run.gains[t][0, 0]), m])
            _write_rows(out / f"filter_trace_{s}_{m}.csv", ["t", "mu", "sigma", "innovation", "gain", "method"], rows)


def cmd_scenarios(args, config: RunConfig, digest: str) -> int:
    names = _select(args.scenario, list(config.scenarios), "scenario")
    args.out.mkdir(parents=True, exist_ok=True)
    _scenario_csvs(args.out, config, names)
    _manifest(args.out, args, config, digest, {"scenarios": ",".join(names)})
    print(f"wrote {len(names)} scenario files to {args.out}")
    return EXIT_OK


def cmd_riccati(args, config: RunConfig, digest: str) -> int:
    model = config.model
    cases = [("naive", naive_observation(model)), ("anchored", anchored_observation(model, config.anchor, 0))]
    rows = []
    for name, obs in cases:
        sol = riccati_steady_state(model, obs)
        gain = " ".join(fmt(g) for g in np.ravel(sol.gain_inf))
        print(f"{name}: Sigma_inf={fmt(np.trace(sol.sigma_inf))} K={gain} "
              f"closed_loop_radius={fmt(sol.closed_loop_spectral_radius)}")
        rows.append([name, fmt(np.trace(sol.sigma_inf)), gain, fmt(sol.closed_loop_spectral_radius)])
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_rows(args.out / "riccati.csv", ["configuration", "sigma_inf", "gain", "closed_loop_radius"], rows)
        _manifest(args.out, args, config, digest, {})
    return EXIT_OK


def cmd_demo(args, config: RunConfig, digest: str) -> int:
    alpha = 0.5 * min_path_sensitivity(config)
    rows = []
    for method in ("raw", "anchored"):
        res = instability_demo(config, args.epsilon, alpha, p=args.p, method=method, n_paths=args.paths)
        print(f"{method}: threshold={res.threshold:.4g}")
        for (a, b), f1, fc in zip(res.block_edges, res.one_step_frequency, res.cumulative_frequency):
            print(f"  quarters {a:3d}-{b - 1:3d}  one-step {f1:.3f}  cumulative {fc:.3f}")
            rows.append([method, a, b - 1, fmt(f1), fmt(fc)])
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_rows(args.out / "instability.csv",
                    ["method", "block_start", "block_end", "one_step_freq", "cumulative_freq"], rows)
        _manifest(args.out, args, config, digest, {"epsilon": args.epsilon, "p": args.p})
    return EXIT_OK


def cmd_bounds(args, config: RunConfig, digest: str) -> int:
    res = bound_check(config, n_paths=args.paths)
    print(f"L_G={res.lipschitz:.6g} fraction_holding={res.fraction:.6g} min_slack={res.min_slack:.3g}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_rows(args.out / "bounds.csv", ["lipschitz", "fraction", "min_slack"],
                    [[fmt(res.lipschitz), fmt(res.fraction), fmt(res.min_slack)]])
        _manifest(args.out, args, config, digest, {"paths": args.paths})
    return EXIT_OK if res.fraction == 1.0 else EXIT_RUNTIME


COMMANDS = {
    "run": cmd_run,
    "scenarios": cmd_scenarios,
    "riccati": cmd_riccati,
    "demo-instability": cmd_demo,
    "check-bounds": cmd_bounds,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config, digest = load_config(args.config)
        changes = {}
        if args.seed is not None:
            changes["master_seed"] = args.seed
        if getattr(args, "reps", None) is not None:
            changes["n_replications"] = args.reps
        if changes:
            config = config.with_(**changes)
        return COMMANDS[args.command](args, config, digest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LifetimePDError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
