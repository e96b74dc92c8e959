"""The joint training objective: forecasting loss + penalized incoherence.

Time is 0-based throughout: the labeled window is [0, t0) and the
forecast window is [t0, T). The objective is

    sum_i sum_{t < t0} (yhat_i^t - y_i^t)^2
        + lam * sum_constraints sum_{t0 <= t < T} residual^2

with residual = parent forecast - sum of child forecasts. Both terms are
sums, not means. The penalty gradient carries sign +1 through a
constraint's parent and -1 through each child.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch
from .hierarchy import HierarchyDag, constraint_matrix, reconciliation_residuals, validate


@dataclass(frozen=True)
class ObjectiveConfig:
    lam: float
    t0: int
    T: int

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if not (1 <= self.t0 <= self.T):
            raise ConfigError(f"need 1 <= t0 <= T, got t0={self.t0}, T={self.T}")


@dataclass
class PanelData:
    """Per-node covariates over [0, T) and targets.

    X is one (T, m_i) array per node; entries may alias a single shared
    array. y is (n, T_y) with T_y >= t0; columns beyond t0 are ground
    truth hidden from training (used only for evaluation).
    """

    X: list = field(repr=False)
    y: np.ndarray = field(repr=False)
    dag: HierarchyDag = None

    def __post_init__(self):
        self.y = np.asarray(self.y)
        n = self.dag.n_nodes
        if self.y.ndim != 2 or self.y.shape[0] != n:
            raise DimensionMismatch(f"y must be ({n}, T_y), got {self.y.shape}")
        if len(self.X) != n:
            raise DimensionMismatch(f"need one covariate matrix per node ({n}), got {len(self.X)}")
        T = self.X[0].shape[0]
        for Xi in self.X:
            if Xi.ndim != 2 or Xi.shape[0] != T:
                raise DimensionMismatch("covariate matrices must share the same row count")
        validate(self.dag)

    @classmethod
    def from_shared(cls, X: np.ndarray, y: np.ndarray, dag: HierarchyDag) -> "PanelData":
        """All nodes observe the same covariates (the benchmark default)."""
        return cls(X=[X] * dag.n_nodes, y=y, dag=dag)

    @property
    def n_nodes(self) -> int:
        return self.dag.n_nodes

    @property
    def T(self) -> int:
        return self.X[0].shape[0]

    def astype(self, dtype) -> "PanelData":
        if self.X[0].dtype == dtype and self.y.dtype == dtype:
            return self
        cache = {}
        X = []
        for Xi in self.X:
            key = id(Xi)
            if key not in cache:
                cache[key] = Xi.astype(dtype)
            X.append(cache[key])
        return PanelData(X=X, y=self.y.astype(dtype), dag=self.dag)


def forecasting_loss(forecasts: np.ndarray, actuals: np.ndarray) -> float:
    """Sum of squared errors over all nodes and time steps given."""
    forecasts = np.asarray(forecasts)
    actuals = np.asarray(actuals)
    if forecasts.shape != actuals.shape:
        raise DimensionMismatch(f"shape mismatch: {forecasts.shape} vs {actuals.shape}")
    d = forecasts - actuals
    return float(np.dot(d.ravel(), d.ravel()))


def reconciliation_loss(dag: HierarchyDag, forecasts: np.ndarray, t0: int, T: int) -> float:
    """Sum of squared constraint residuals over the window [t0, T)."""
    if T <= t0:
        return 0.0
    r = reconciliation_residuals(dag, forecasts, t0, T)
    return float(np.dot(r.ravel(), r.ravel()))


def objective_from_forecasts(
    dag: HierarchyDag, forecasts: np.ndarray, y: np.ndarray, cfg: ObjectiveConfig
) -> float:
    """Objective value when forecasts are already available.

    forecasts may cover only [0, t0) when cfg.lam == 0.
    """
    value = forecasting_loss(forecasts[:, : cfg.t0], y[:, : cfg.t0])
    if cfg.lam > 0:
        value += cfg.lam * reconciliation_loss(dag, forecasts, cfg.t0, cfg.T)
    return value


def total_objective(models, data: PanelData, cfg: ObjectiveConfig) -> float:
    """Recompute forecasts from the models and evaluate the objective."""
    forecasts = models.forecast_panel([Xi[: cfg.T] for Xi in data.X])
    return objective_from_forecasts(data.dag, forecasts, data.y, cfg)


def upstream_matrix(
    dag: HierarchyDag, forecasts: np.ndarray, y: np.ndarray, cfg: ObjectiveConfig
) -> np.ndarray:
    """d(objective)/d(forecast) for every node and time step.

    Training columns get 2 * (yhat - y); forecast-window columns get the
    penalty term 2 * lam * R^T residual (R carries the +-1 signs).
    """
    n, T_avail = forecasts.shape
    width = cfg.T if cfg.lam > 0 else cfg.t0
    if T_avail < width:
        raise DimensionMismatch(f"forecasts cover {T_avail} steps, need {width}")
    U = np.zeros((n, width), dtype=forecasts.dtype)
    U[:, : cfg.t0] = 2.0 * (forecasts[:, : cfg.t0] - y[:, : cfg.t0])
    if cfg.lam > 0 and cfg.T > cfg.t0:
        R = constraint_matrix(dag).astype(forecasts.dtype)
        resid = R @ forecasts[:, cfg.t0 : cfg.T]
        U[:, cfg.t0 :] = (2.0 * cfg.lam) * (R.T @ resid)
    return U


def node_upstream(
    i: int,
    dag: HierarchyDag,
    forecasts: np.ndarray,
    y_i: np.ndarray,
    cfg: ObjectiveConfig,
    touching=None,
) -> np.ndarray:
    """Upstream row for a single node, reading only that node's targets.

    forecasts is the full cached (n, T) panel (needed for residuals of
    constraints touching node i); y_i is node i's target series.
    """
    width = cfg.T if cfg.lam > 0 else cfg.t0
    u = np.zeros(width, dtype=forecasts.dtype)
    u[: cfg.t0] = 2.0 * (forecasts[i, : cfg.t0] - y_i[: cfg.t0])
    if cfg.lam > 0 and cfg.T > cfg.t0:
        if touching is None:
            touching = dag.constraints_touching(i)
        for ci, sign in touching:
            c = dag.constraints[ci]
            resid = forecasts[c.parent, cfg.t0 : cfg.T] - forecasts[
                list(c.children), cfg.t0 : cfg.T
            ].sum(axis=0)
            u[cfg.t0 :] += (2.0 * cfg.lam * sign) * resid
    return u


def objective_gradient(models, data: PanelData, cfg: ObjectiveConfig) -> list[np.ndarray]:
    """Exact gradient of the objective, one flat vector per parameter block."""
    X_list = [Xi[: cfg.T] for Xi in data.X]
    forecasts = models.forecast_panel(X_list)
    U = upstream_matrix(data.dag, forecasts, data.y, cfg)
    X_used = X_list if cfg.lam > 0 else [Xi[: cfg.t0] for Xi in data.X]
    return [
        models.block_gradient(b, X_used, U[list(models.nodes_of_block(b))])
        for b in range(models.n_blocks)
    ]


def cauchy_schwarz_lower_bound(residual: float, n: int) -> float:
    """Certified lower bound residual^2 / n on the sum of squared node errors.

    Valid at any time step where the ground truth satisfies the constraint
    whose residual is given; n is the number of nodes involved.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    return residual * residual / n
