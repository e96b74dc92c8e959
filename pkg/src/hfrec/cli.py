"""Command-line interface.

Subcommands: generate (write a synthetic instance), fit (train one method
on one benchmark seed), reconcile (post-hoc projection of a forecast
file), bench (the full experiment matrix), intervals (prediction bands
for a finished fit). Exit codes: 0 success, 1 configuration error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    RunConfig,
    _optimizer_for,
    build_initial_models,
    canonical_fit_name,
    derive_seed,
    emit_table,
    load_run_config,
    parse_method,
    run_benchmark,
)
from .errors import ConfigError
from .forecast_models import save_models
from .hierarchy import load_hierarchy, save_hierarchy, summation_matrix
from .hts import CgConfig, ReconcilerWeights, reconcile_panel
from .objective import ObjectiveConfig
from .optimizers import fit as run_fit
from .synthdata import generate, read_series_csv, save_instance, write_series_csv
from .uncertainty import estimate_error_covariance, prediction_intervals, write_intervals_csv
from .bench import _name_key


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we want exit 1 + usage
        raise ConfigError(f"{message}\n{self.format_usage()}")


def build_parser() -> _Parser:
    p = _Parser(prog="hfrec", description="hierarchical forecasting benchmark")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel seed workers (bench)")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = p.add_subparsers(dest="command")

    g = sub.add_parser("generate", parents=[], help="write a synthetic instance")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="train one method on one benchmark seed")
    f.add_argument("--config", required=True)
    f.add_argument("--method", required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("reconcile", help="project a forecast file onto the coherent subspace")
    r.add_argument("--hierarchy", required=True)
    r.add_argument("--forecasts", required=True)
    r.add_argument("--mode", default="ols", choices=["ols", "wls_var"])
    r.add_argument("--weights", default=None, help="JSON list of per-node variances (wls_var)")
    r.add_argument("--t-from", type=int, default=0, help="first column to reconcile")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reconcile)

    b = sub.add_parser("bench", help="run the full experiment matrix")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    i = sub.add_parser("intervals", help="prediction bands for a finished fit")
    i.add_argument("--fit", required=True, help="output directory of a fit run")
    i.add_argument("--level", type=float, default=0.95)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_intervals)
    return p


def _seed_index(args) -> int:
    return 0 if args.seed is None else args.seed


def cmd_generate(args) -> None:
    cfg = load_run_config(args.config)
    synth = cfg.synth
    if args.seed is not None:
        synth = dataclasses.replace(synth, seed=derive_seed(cfg.seed, args.seed, 0))
    inst = generate(synth)
    out = Path(args.out)
    save_instance(inst, out)
    save_hierarchy(synth.hierarchy, out / "hierarchy.json")
    if not args.quiet:
        print(f"instance written to {out}", file=sys.stderr)


def cmd_fit(args) -> None:
    cfg = load_run_config(args.config)
    lam, post_hoc = parse_method(args.method)
    if post_hoc:
        raise ConfigError("fit trains a model; use reconcile for the post-hoc step")
    s = _seed_index(args)
    synth = dataclasses.replace(cfg.synth, seed=derive_seed(cfg.seed, s, 0))
    inst = generate(synth)
    params0 = build_initial_models(cfg, derive_seed(cfg.seed, s, 1))
    fit_name = canonical_fit_name(lam)
    obj_cfg = ObjectiveConfig(lam=lam, t0=synth.t0, T=synth.T)
    opt_cfg = _optimizer_for(cfg, fit_name, derive_seed(cfg.seed, s, 2, _name_key(fit_name)))
    result = run_fit(params0, inst.data, obj_cfg, opt_cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_series_csv(out / "forecasts.csv", result.forecasts)
    save_models(result.models, out / "models.json")
    with open(out / "fit_result.json", "w") as f:
        json.dump(
            {
                "objective_trace": [float(v) for v in result.objective_trace],
                "trace_iterations": [int(v) for v in result.trace_iterations],
                "converged": bool(result.converged),
                "final_objective": result.final_objective,
            },
            f,
            indent=2,
        )
        f.write("\n")
    with open(out / "manifest.json", "w") as f:
        json.dump(
            {"config": cfg.to_json_dict(), "method": args.method, "seed_index": s},
            f,
            indent=2,
        )
        f.write("\n")
    if not args.quiet:
        print(f"fit written to {out}", file=sys.stderr)


def cmd_reconcile(args) -> None:
    dag = load_hierarchy(args.hierarchy)
    forecasts = read_series_csv(args.forecasts)
    if forecasts.shape[0] != dag.n_nodes:
        raise ConfigError(
            f"forecast file has {forecasts.shape[0]} series, hierarchy has {dag.n_nodes} nodes"
        )
    if args.mode == "wls_var":
        if args.weights is None:
            raise ConfigError("wls_var requires --weights")
        with open(args.weights) as f:
            weights = ReconcilerWeights(mode="wls_var", diag_weights=np.asarray(json.load(f), dtype=float))
    else:
        weights = ReconcilerWeights(mode="ols")
    t_from = args.t_from
    if not (0 <= t_from <= forecasts.shape[1]):
        raise ConfigError(f"--t-from outside [0, {forecasts.shape[1]}]")
    S = summation_matrix(dag)
    reconciled = forecasts.copy()
    reconciled[:, t_from:] = reconcile_panel(S, forecasts[:, t_from:], weights, CgConfig())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_series_csv(out / "reconciled.csv", reconciled)
    if not args.quiet:
        print(f"reconciled forecasts written to {out}", file=sys.stderr)


def cmd_bench(args) -> None:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    report = run_benchmark(cfg, jobs=max(1, args.jobs), quiet=args.quiet)
    text, csv_str, json_str = emit_table(report)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.txt").write_text(text)
    (out / "report.csv").write_text(csv_str)
    (out / "report.json").write_text(json_str)
    if not args.quiet:
        print(text)


def cmd_intervals(args) -> None:
    fit_dir = Path(args.fit)
    with open(fit_dir / "manifest.json") as f:
        manifest = json.load(f)
    cfg = RunConfig.from_json_dict(manifest["config"])
    s = manifest["seed_index"]
    synth = dataclasses.replace(cfg.synth, seed=derive_seed(cfg.seed, s, 0))
    inst = generate(synth)
    forecasts = read_series_csv(fit_dir / "forecasts.csv")
    t0, T = synth.t0, synth.T
    residuals = forecasts[:, :t0] - inst.data.y[:, :t0]
    sigma = estimate_error_covariance(residuals)
    report = prediction_intervals(
        forecasts[:, t0:T], sigma, synth.hierarchy, level=args.level, t_from=t0
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_intervals_csv(report, out / "intervals.csv")
    if not args.quiet:
        print(f"intervals written to {out}", file=sys.stderr)


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise ConfigError(parser.format_usage())
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return 1
    try:
        args.func(args)
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
