"""Post-hoc optimal reconciliation of independent forecasts.

Projects a forecast vector onto the coherent subspace spanned by the
summation matrix S: find leaf values beta minimizing the (weighted)
distance to the input, return S beta. The normal equations are solved
matrix-free with conjugate gradients, one time step at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, NotConverged


@dataclass
class CgConfig:
    max_iters: int = 1000
    residual_tol: float = 1e-12

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ConfigError("residual_tol must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")


@dataclass
class ReconcilerWeights:
    """ols: unweighted projection; wls_var: per-node error variances."""

    mode: str = "ols"
    diag_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("ols", "wls_var"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "wls_var":
            if self.diag_weights is None:
                raise ConfigError("wls_var needs diag_weights")
            self.diag_weights = np.asarray(self.diag_weights, dtype=float)
            if not np.all(np.isfinite(self.diag_weights)) or not np.all(self.diag_weights > 0):
                raise ConfigError("diag_weights must be finite and > 0")


def wls_weights_from_residuals(train_residuals: np.ndarray, floor: float = 1e-12) -> ReconcilerWeights:
    """Per-node training residual variances as reconciliation weights."""
    train_residuals = np.asarray(train_residuals, dtype=float)
    var = np.mean(train_residuals**2, axis=1)
    return ReconcilerWeights(mode="wls_var", diag_weights=np.maximum(var, floor))


def cg_solve(A, b: np.ndarray, cfg: CgConfig | None = None) -> np.ndarray:
    """Conjugate gradients for SPD A (dense matrix or matvec callable).

    Starts at zero and stops when ||Ax - b|| <= residual_tol * ||b||.
    """
    cfg = cfg or CgConfig()
    b = np.asarray(b, dtype=float)
    matvec = A if callable(A) else (lambda v: A @ v)
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x
    p = r.copy()
    rs = float(r @ r)
    for _ in range(cfg.max_iters):
        if np.sqrt(rs) <= cfg.residual_tol * bnorm:
            return x
        Ap = matvec(p)
        alpha = rs / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= cfg.residual_tol * bnorm:
        return x
    raise NotConverged(
        f"CG residual {np.sqrt(rs) / bnorm:.3e} above {cfg.residual_tol:.1e} "
        f"after {cfg.max_iters} iterations"
    )


def reconcile(
    S: np.ndarray,
    y_hat: np.ndarray,
    weights: ReconcilerWeights | None = None,
    cfg: CgConfig | None = None,
) -> np.ndarray:
    """Project one forecast vector onto the coherent subspace.

    ols solves (S^T S) beta = S^T y_hat; wls_var weighs nodes by inverse
    error variance. Returns S beta, which satisfies every aggregation
    constraint by construction.
    """
    weights = weights or ReconcilerWeights()
    S = np.asarray(S, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.shape != (S.shape[0],):
        raise DimensionMismatch(f"y_hat must have shape ({S.shape[0]},), got {y_hat.shape}")
    if weights.mode == "wls_var":
        if weights.diag_weights.shape != (S.shape[0],):
            raise DimensionMismatch("diag_weights must have one entry per node")
        w_inv = 1.0 / weights.diag_weights
        matvec = lambda v: S.T @ (w_inv * (S @ v))
        rhs = S.T @ (w_inv * y_hat)
    else:
        matvec = lambda v: S.T @ (S @ v)
        rhs = S.T @ y_hat
    beta = cg_solve(matvec, rhs, cfg)
    return S @ beta


def reconcile_panel(
    S: np.ndarray,
    forecasts: np.ndarray,
    weights: ReconcilerWeights | None = None,
    cfg: CgConfig | None = None,
) -> np.ndarray:
    """Columnwise reconciliation of an (n_nodes, T) forecast panel."""
    forecasts = np.asarray(forecasts, dtype=float)
    if forecasts.ndim != 2 or forecasts.shape[0] != S.shape[0]:
        raise DimensionMismatch(
            f"panel must be ({S.shape[0]}, T), got {forecasts.shape}"
        )
    out = np.empty_like(forecasts)
    for t in range(forecasts.shape[1]):
        out[:, t] = reconcile(S, forecasts[:, t], weights, cfg)
    return out
