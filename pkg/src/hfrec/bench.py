"""Benchmark harness: the synthetic experiment matrix over many seeds.

Methods compared on identical data and identical initializations:
  no_hierarchy          independent fits, penalty off
  no_hierarchy_hts      the same fits, test window reconciled post hoc
  full_hierarchy_lam_X  joint fit with penalty weight X

Per seed, the data stream, the init stream, and each method's optimizer
stream are derived independently, so adding or removing a method never
changes another method's cells, while penalized and unpenalized fits
share their initialization exactly.
"""

from __future__ import annotations

import dataclasses
import json
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceDetected
from .forecast_models import NodeModels, SharedModel, init_model, init_shared_mlp
from .hierarchy import reconciliation_residuals, summation_matrix
from .hts import CgConfig, ReconcilerWeights, reconcile_panel, wls_weights_from_residuals
from .objective import ObjectiveConfig
from .optimizers import OptimizerConfig, fit
from .synthdata import SynthConfig, SynthInstance, generate

METHOD_PREFIX = "full_hierarchy_lam_"


def parse_method(name: str) -> tuple[float, bool]:
    """Return (lam, reconcile_post_hoc) for a method name."""
    if name == "no_hierarchy":
        return 0.0, False
    if name in ("no_hierarchy_hts", "no_hierarchy+hts"):
        return 0.0, True
    if name.startswith(METHOD_PREFIX):
        try:
            lam = float(name[len(METHOD_PREFIX) :].replace("_", "."))
        except ValueError:
            raise ConfigError(f"cannot parse penalty from method name {name!r}")
        if lam <= 0:
            raise ConfigError(f"penalty in {name!r} must be > 0")
        return lam, False
    raise ConfigError(f"unknown method {name!r}")


def canonical_fit_name(lam: float) -> str:
    return "no_hierarchy" if lam == 0 else f"{METHOD_PREFIX}{lam:g}"


@dataclass
class ModelConfig:
    kind: str = "mlp"  # "linear" | "mlp"
    hidden: int = 100
    shared: bool = False
    dtype: str = "float64"  # "float64" | "float32"

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"unknown dtype {self.dtype!r}")
        if self.shared and self.kind != "mlp":
            raise ConfigError("shared mode requires the mlp kind")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    methods: list = field(default_factory=lambda: ["no_hierarchy"])
    method_optimizer: dict = field(default_factory=dict)  # per-fit overrides
    n_seeds: int = 1
    seed: int = 0
    hts_mode: str = "ols"

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")
        if not self.methods:
            raise ConfigError("methods list is empty")
        for name in self.methods:
            parse_method(name)
        if self.hts_mode not in ("ols", "wls_var"):
            raise ConfigError(f"unknown hts_mode {self.hts_mode!r}")
        for name in self.method_optimizer:
            parse_method(name)

    def to_json_dict(self) -> dict:
        return {
            "synth": self.synth.to_json_dict(),
            "model": dataclasses.asdict(self.model),
            "optimizer": dataclasses.asdict(self.optimizer),
            "methods": list(self.methods),
            "method_optimizer": {k: dict(v) for k, v in self.method_optimizer.items()},
            "n_seeds": self.n_seeds,
            "seed": self.seed,
            "hts_mode": self.hts_mode,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RunConfig":
        kwargs = dict(d)
        if "synth" in kwargs:
            kwargs["synth"] = SynthConfig.from_json_dict(kwargs["synth"])
        if "model" in kwargs:
            kwargs["model"] = ModelConfig(**kwargs["model"])
        if "optimizer" in kwargs:
            kwargs["optimizer"] = OptimizerConfig(**kwargs["optimizer"])
        return cls(**kwargs)


def load_run_config(path) -> RunConfig:
    with open(path) as f:
        try:
            return RunConfig.from_json_dict(json.load(f))
        except (TypeError, KeyError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"bad config file {path}: {e}")


def derive_seed(*keys: int) -> int:
    """Stable child seed from integer keys."""
    return int(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]).generate_state(1)[0])


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode())


def build_initial_models(cfg: RunConfig, seed: int):
    """Seeded initial parameters; identical across methods for one seed."""
    n = cfg.synth.hierarchy.n_nodes
    dtype = cfg.model.np_dtype
    if cfg.model.shared:
        return SharedModel(
            init_shared_mlp(cfg.synth.m, cfg.model.hidden, n, seed=seed, dtype=dtype)
        )
    return NodeModels(
        [
            init_model(cfg.model.kind, cfg.synth.m, cfg.model.hidden, seed=derive_seed(seed, i), dtype=dtype)
            for i in range(n)
        ]
    )


def _optimizer_for(cfg: RunConfig, fit_name: str, seed_key: int) -> OptimizerConfig:
    opt = dataclasses.replace(cfg.optimizer)
    for key, value in cfg.method_optimizer.get(fit_name, {}).items():
        if not hasattr(opt, key):
            raise ConfigError(f"unknown optimizer field {key!r} in override for {fit_name}")
        setattr(opt, key, value)
    opt.seed = seed_key
    return opt


def _metrics(dag, y: np.ndarray, forecasts: np.ndarray, t0: int, T: int) -> dict:
    err = forecasts - y
    r_train = reconciliation_residuals(dag, forecasts, 0, t0)
    r_test = reconciliation_residuals(dag, forecasts, t0, T)
    return {
        "train_mse": (err[:, :t0] ** 2).mean(axis=1),
        "test_mse": (err[:, t0:T] ** 2).mean(axis=1),
        "rec_train": float((r_train**2).mean()),
        "rec_test": float((r_test**2).mean()),
    }


def _cauchy_schwarz_violations(dag, y: np.ndarray, forecasts: np.ndarray, t0: int, T: int) -> int:
    """Count test steps where residual^2/k exceeds the members' squared error."""
    err2 = (forecasts[:, t0:T] - y[:, t0:T]) ** 2
    violations = 0
    for c in dag.constraints:
        members = [c.parent] + list(c.children)
        resid = forecasts[c.parent, t0:T] - forecasts[list(c.children), t0:T].sum(axis=0)
        bound = resid**2 / len(members)
        violations += int(np.sum(bound > err2[members].sum(axis=0)))
    return violations


def run_seed(cfg: RunConfig, s: int) -> dict:
    """All methods on one seed; returns per-method metrics or failure marks."""
    synth = dataclasses.replace(cfg.synth, seed=derive_seed(cfg.seed, s, 0))
    inst = generate(synth)
    dag = synth.hierarchy
    y = inst.data.y
    t0, T = synth.t0, synth.T
    params0 = build_initial_models(cfg, derive_seed(cfg.seed, s, 1))

    lams = []
    for name in cfg.methods:
        lam, _ = parse_method(name)
        if lam not in lams:
            lams.append(lam)

    fits = {}
    fit_error = {}
    runtimes = {}
    for lam in lams:
        fit_name = canonical_fit_name(lam)
        obj_cfg = ObjectiveConfig(lam=lam, t0=t0, T=T)
        opt_cfg = _optimizer_for(cfg, fit_name, derive_seed(cfg.seed, s, 2, _name_key(fit_name)))
        start = time.perf_counter()
        try:
            fits[lam] = fit(params0, inst.data, obj_cfg, opt_cfg)
        except DivergenceDetected as e:
            fit_error[lam] = str(e)
        runtimes[fit_name] = time.perf_counter() - start

    out = {"metrics": {}, "failures": {}, "runtimes": runtimes, "cs_violations": 0}
    S = summation_matrix(dag)
    for name in cfg.methods:
        lam, post_hoc = parse_method(name)
        if lam in fit_error:
            out["failures"][name] = fit_error[lam]
            continue
        forecasts = fits[lam].forecasts
        if post_hoc:
            forecasts = forecasts.copy()
            start = time.perf_counter()
            if cfg.hts_mode == "wls_var":
                weights = wls_weights_from_residuals(forecasts[:, :t0] - y[:, :t0])
            else:
                weights = ReconcilerWeights(mode="ols")
            forecasts[:, t0:T] = reconcile_panel(S, forecasts[:, t0:T], weights, CgConfig())
            runtimes[name] = runtimes.get(name, 0.0) + time.perf_counter() - start
        out["metrics"][name] = _metrics(dag, y, forecasts, t0, T)
        out["cs_violations"] += _cauchy_schwarz_violations(dag, y, forecasts, t0, T)
    return out


def _run_seed_star(args):
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=1):
            return run_seed(*args)
    except ImportError:  # pragma: no cover
        return run_seed(*args)


@dataclass
class ExperimentReport:
    methods: list
    n_nodes: int
    n_seeds: int
    cells: list  # dicts: method, node, split, metric, mean, std
    failures: dict
    cs_violations: int
    runtime_seconds: dict  # not part of deterministic outputs
    config: dict

    def cell(self, method: str, node, split: str, metric: str) -> tuple[float, float]:
        for c in self.cells:
            if (
                c["method"] == method
                and str(c["node"]) == str(node)
                and c["split"] == split
                and c["metric"] == metric
            ):
                return c["mean"], c["std"]
        raise KeyError((method, node, split, metric))


def run_benchmark(cfg: RunConfig, jobs: int = 1, quiet: bool = True) -> ExperimentReport:
    """All seeds, all methods; aggregates mean and std (ddof=1) per cell."""
    seeds = list(range(cfg.n_seeds))
    results = [None] * cfg.n_seeds
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for s, res in zip(seeds, ex.map(_run_seed_star, [(cfg, s) for s in seeds])):
                results[s] = res
                if not quiet:
                    print(f"seed {s + 1}/{cfg.n_seeds} done", file=sys.stderr)
    else:
        for s in seeds:
            results[s] = run_seed(cfg, s)
            if not quiet:
                print(f"seed {s + 1}/{cfg.n_seeds} done", file=sys.stderr)

    n_nodes = cfg.synth.hierarchy.n_nodes
    cells = []
    failures = {name: 0 for name in cfg.methods}
    cs_violations = 0
    runtimes = {}
    for res in results:
        cs_violations += res["cs_violations"]
        for name, err in res["failures"].items():
            failures[name] += 1
        for name, sec in res["runtimes"].items():
            runtimes[name] = runtimes.get(name, 0.0) + sec

    def agg(values):
        arr = np.asarray(values, dtype=float)
        mean = float(arr.mean())
        std = float(arr.std(ddof=1)) if arr.shape[0] > 1 else 0.0
        return mean, std

    for name in cfg.methods:
        rows = [r["metrics"][name] for r in results if name in r["metrics"]]
        if not rows:
            raise DivergenceDetected(f"method {name} diverged on every seed")
        for split, mse_key, rec_key in (
            ("test", "test_mse", "rec_test"),
            ("train", "train_mse", "rec_train"),
        ):
            for node in range(n_nodes):
                mean, std = agg([r[mse_key][node] for r in rows])
                cells.append(
                    {"method": name, "node": node, "split": split, "metric": "mse", "mean": mean, "std": std}
                )
            mean, std = agg([r[rec_key] for r in rows])
            cells.append(
                {"method": name, "node": "total", "split": split, "metric": "rec", "mean": mean, "std": std}
            )

    return ExperimentReport(
        methods=list(cfg.methods),
        n_nodes=n_nodes,
        n_seeds=cfg.n_seeds,
        cells=cells,
        failures=failures,
        cs_violations=cs_violations,
        runtime_seconds=runtimes,
        config=cfg.to_json_dict(),
    )


def _fmt(x: float) -> str:
    return f"{x:.3g}"


def emit_table(report: ExperimentReport) -> tuple[str, str, str]:
    """Text table (methods as columns), CSV, and JSON renderings."""
    methods = report.methods
    rows = []
    for split in ("test", "train"):
        for node in list(range(report.n_nodes)) + ["total"]:
            metric = "rec" if node == "total" else "mse"
            label = "rec total" if node == "total" else f"mse y{node}"
            row = [f"{split} {label}"]
            for m in methods:
                mean, std = report.cell(m, node, split, metric)
                row.append(f"{_fmt(mean)} ± {_fmt(std)}")
            rows.append(row)

    widths = [max(len(r[i]) for r in rows + [[""] + methods]) for i in range(len(methods) + 1)]
    header = ["".ljust(widths[0])] + [m.ljust(widths[i + 1]) for i, m in enumerate(methods)]
    lines = ["  ".join(header).rstrip()]
    lines.append("-" * len(lines[0]))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    lines.append("")
    lines.append(f"seeds: {report.n_seeds}   (cells are mean ± std across seeds, std ddof=1)")
    if any(report.failures.values()):
        lines.append(f"diverged seeds excluded: {report.failures}")
    if report.runtime_seconds:
        total = sum(report.runtime_seconds.values())
        lines.append(f"fit wall time: {total:.1f}s total, " + ", ".join(f"{k}={v:.1f}s" for k, v in sorted(report.runtime_seconds.items())))
    text = "\n".join(lines) + "\n"

    csv_lines = ["method,node,split,metric,mean,std"]
    for c in report.cells:
        csv_lines.append(
            f"{c['method']},{c['node']},{c['split']},{c['metric']},{c['mean']!r},{c['std']!r}"
        )
    csv_str = "\n".join(csv_lines) + "\n"

    json_str = json.dumps(
        {
            "n_seeds": report.n_seeds,
            "methods": report.methods,
            "cells": report.cells,
            "failures": report.failures,
            "cs_violations": report.cs_violations,
            "config": report.config,
        },
        indent=2,
    ) + "\n"
    return text, csv_str, json_str
