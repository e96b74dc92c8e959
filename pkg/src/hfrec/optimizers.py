"""Fitting the joint objective: full gradient descent and randomized
block coordinate descent.

Both methods iterate plain fixed-step updates theta <- theta - gamma * g.
The coordinate method samples one parameter block (node) per iteration,
computes only that block's partial gradient from cached forecasts, and
refreshes the cache only for the updated node, so an update never reads
another node's covariates or targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceDetected
from .objective import (
    ObjectiveConfig,
    PanelData,
    node_upstream,
    objective_from_forecasts,
    upstream_matrix,
)


@dataclass
class OptimizerConfig:
    method: str = "gd"  # "gd" | "rcd"
    step_size: object = 1e-3  # scalar, or one positive step per block
    iterations: int = 1000
    seed: int = 0  # block sampling (rcd only)
    convergence_tol: float = 0.0  # stop when full-gradient norm < tol; 0 disables
    trace_every: int = 1  # objective logging cadence; 0 logs only start/end

    def resolve_steps(self, n_blocks: int) -> np.ndarray:
        steps = np.atleast_1d(np.asarray(self.step_size, dtype=float))
        if steps.size == 1:
            steps = np.full(n_blocks, steps[0])
        if steps.shape != (n_blocks,):
            raise ConfigError(f"need 1 or {n_blocks} step sizes, got {steps.shape}")
        if not np.all(steps > 0):
            raise ConfigError("step sizes must be > 0")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.method not in ("gd", "rcd"):
            raise ConfigError(f"unknown method {self.method!r}")
        return steps


@dataclass
class FitResult:
    models: object
    objective_trace: np.ndarray
    trace_iterations: np.ndarray
    forecasts: np.ndarray = field(repr=False)
    converged: bool = False

    @property
    def final_objective(self) -> float:
        return float(self.objective_trace[-1])


def _check_finite(value: float, k: int) -> None:
    if not np.isfinite(value):
        raise DivergenceDetected(f"objective became non-finite at iteration {k}")


def fit(params0, data: PanelData, obj_cfg: ObjectiveConfig, opt_cfg: OptimizerConfig) -> FitResult:
    """Dispatch on opt_cfg.method."""
    opt_cfg.resolve_steps(params0.n_blocks)
    if opt_cfg.method == "gd":
        return gd_fit(params0, data, obj_cfg, opt_cfg)
    return rcd_fit(params0, data, obj_cfg, opt_cfg)


def gd_fit(params0, data: PanelData, obj_cfg: ObjectiveConfig, opt_cfg: OptimizerConfig) -> FitResult:
    """Full-batch gradient descent; returns the best-objective iterate."""
    steps = opt_cfg.resolve_steps(params0.n_blocks)
    models = params0.copy()
    data = data.astype(models.dtype)
    width = obj_cfg.T if obj_cfg.lam > 0 else obj_cfg.t0
    X_used = [Xi[:width] for Xi in data.X]
    trace, trace_iters = [], []
    best_obj, best_models = np.inf, models
    converged = False

    for k in range(opt_cfg.iterations):
        forecasts = models.forecast_panel(X_used)
        obj = objective_from_forecasts(data.dag, forecasts, data.y, obj_cfg)
        _check_finite(obj, k)
        if obj < best_obj:
            best_obj, best_models = obj, models.copy()
        if opt_cfg.trace_every and k % opt_cfg.trace_every == 0:
            trace.append(obj)
            trace_iters.append(k)
        grads = []
        sq_norm = 0.0
        U = upstream_matrix(data.dag, forecasts, data.y, obj_cfg)
        for b in range(models.n_blocks):
            g = models.block_gradient(b, X_used, U[list(models.nodes_of_block(b))])
            grads.append(g)
            sq_norm += float(g @ g)
        if opt_cfg.convergence_tol > 0 and np.sqrt(sq_norm) < opt_cfg.convergence_tol:
            converged = True
            break
        for b, g in enumerate(grads):
            models.update_block(b, steps[b], g)

    forecasts = models.forecast_panel(X_used)
    obj = objective_from_forecasts(data.dag, forecasts, data.y, obj_cfg)
    _check_finite(obj, opt_cfg.iterations)
    if obj < best_obj:
        best_obj, best_models = obj, models
    trace.append(best_obj)
    trace_iters.append(opt_cfg.iterations)
    final_forecasts = best_models.forecast_panel([Xi[: obj_cfg.T] for Xi in data.X])
    return FitResult(
        models=best_models,
        objective_trace=np.asarray(trace),
        trace_iterations=np.asarray(trace_iters),
        forecasts=np.asarray(final_forecasts, dtype=float),
        converged=converged,
    )


def rcd_fit(params0, data: PanelData, obj_cfg: ObjectiveConfig, opt_cfg: OptimizerConfig) -> FitResult:
    """Randomized block coordinate descent (uniform block sampling).

    Per iteration only the sampled block's partial gradient is computed
    and only that block's cached forecasts are refreshed.
    """
    steps = opt_cfg.resolve_steps(params0.n_blocks)
    models = params0.copy()
    data = data.astype(models.dtype)
    rng = np.random.default_rng(opt_cfg.seed)
    width = obj_cfg.T if obj_cfg.lam > 0 else obj_cfg.t0
    X_used = [Xi[:width] for Xi in data.X]
    cache = models.forecast_panel(X_used)
    touching = [data.dag.constraints_touching(i) for i in range(data.n_nodes)]
    trace, trace_iters = [], []
    converged = False

    obj = objective_from_forecasts(data.dag, cache, data.y, obj_cfg)
    _check_finite(obj, 0)
    trace.append(obj)
    trace_iters.append(0)
    k_done = 0

    for k in range(opt_cfg.iterations):
        b = int(rng.integers(models.n_blocks))
        rows = models.nodes_of_block(b)
        if len(rows) == 1:
            i = rows[0]
            U_rows = node_upstream(i, data.dag, cache, data.y[i], obj_cfg, touching[i])[None, :]
        else:
            U_rows = upstream_matrix(data.dag, cache, data.y, obj_cfg)[list(rows)]
        g = models.block_gradient(b, X_used, U_rows)
        models.update_block(b, steps[b], g)
        for i in rows:
            cache[i] = models.forecast_node(i, X_used[i])
            if not np.isfinite(cache[i]).all():
                raise DivergenceDetected(f"forecasts became non-finite at iteration {k}")
        k_done = k + 1
        if opt_cfg.trace_every and (k + 1) % opt_cfg.trace_every == 0:
            obj = objective_from_forecasts(data.dag, cache, data.y, obj_cfg)
            _check_finite(obj, k)
            trace.append(obj)
            trace_iters.append(k + 1)
            if opt_cfg.convergence_tol > 0:
                U = upstream_matrix(data.dag, cache, data.y, obj_cfg)
                sq = 0.0
                for bb in range(models.n_blocks):
                    g = models.block_gradient(bb, X_used, U[list(models.nodes_of_block(bb))])
                    sq += float(g @ g)
                if np.sqrt(sq) < opt_cfg.convergence_tol:
                    converged = True
                    break

    final_forecasts = models.forecast_panel([Xi[: obj_cfg.T] for Xi in data.X])
    obj_full = objective_from_forecasts(
        data.dag, final_forecasts[:, :width], data.y, obj_cfg
    )
    _check_finite(obj_full, k_done)
    if trace_iters[-1] != k_done:
        trace.append(obj_full)
        trace_iters.append(k_done)
    return FitResult(
        models=models,
        objective_trace=np.asarray(trace),
        trace_iterations=np.asarray(trace_iters),
        forecasts=np.asarray(final_forecasts, dtype=float),
        converged=converged,
    )
