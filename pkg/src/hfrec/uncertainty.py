"""Analytic uncertainty propagation for reconciliation.

The forecast-error covariance is a plug-in sample covariance of training
residuals. The variance of a constraint residual (parent minus sum of
children) follows from that covariance directly, which gives the
reconciliation band reported next to the per-node prediction intervals.
Prior log-densities (half-Cauchy, LKJ) are provided so a MAP objective
can be assembled; no posterior sampling happens here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    ConfigError,
    DimensionMismatch,
    IndexOutOfRange,
    InsufficientData,
    NotCorrelation,
    NotPositiveDefinite,
)
from .hierarchy import AggregationConstraint, HierarchyDag


@dataclass
class ErrorCovariance:
    sigma: np.ndarray

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.sigma.ndim != 2 or self.sigma.shape[0] != self.sigma.shape[1]:
            raise DimensionMismatch(f"sigma must be square, got {self.sigma.shape}")

    @property
    def n(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the Bayesian formulation; not used by defaults."""

    eta: float = 1.0
    omega_scale: float = 1.0
    lambda_rec: float = 1.0

    def __post_init__(self):
        if self.eta <= 0 or self.omega_scale <= 0 or self.lambda_rec <= 0:
            raise ConfigError("eta and scales must be > 0")


def estimate_error_covariance(train_residuals: np.ndarray, jitter: float = 1e-9) -> ErrorCovariance:
    """Sample covariance of per-node residual rows, plus jitter * I."""
    r = np.asarray(train_residuals, dtype=float)
    if r.ndim != 2:
        raise DimensionMismatch(f"residuals must be (n, t0), got {r.shape}")
    n, t0 = r.shape
    if t0 < 2:
        raise InsufficientData(f"need at least 2 observations, got {t0}")
    centered = r - r.mean(axis=1, keepdims=True)
    sigma = (centered @ centered.T) / (t0 - 1)
    return ErrorCovariance(sigma + jitter * np.eye(n))


def reconciliation_variance(sigma: ErrorCovariance, constraint: AggregationConstraint) -> float:
    """Variance of parent - sum(children) under jointly Gaussian errors.

    sum over members of Sigma_ii - 2 sum_children Sigma_{parent,i}
    + sum_{i != j, children} Sigma_ij.
    """
    S = sigma.sigma
    p = constraint.parent
    ch = list(constraint.children)
    members = [p] + ch
    if any(not (0 <= i < sigma.n) for i in members):
        raise IndexOutOfRange("constraint indices outside covariance")
    var = float(sum(S[i, i] for i in members))
    var -= 2.0 * float(sum(S[p, i] for i in ch))
    var += float(sum(S[i, j] for i in ch for j in ch if i != j))
    return var


def half_cauchy_logpdf(x: float, scale: float) -> float:
    """log density of |Cauchy(0, scale)| at x; -inf for x < 0."""
    if scale <= 0:
        raise ConfigError("scale must be > 0")
    if x < 0:
        return -math.inf
    return math.log(2.0 / (math.pi * scale * (1.0 + (x / scale) ** 2)))


def lkj_logpdf_unnormalized(corr: np.ndarray, eta: float) -> float:
    """(eta - 1) * log det(corr) for a valid correlation matrix."""
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise NotCorrelation(f"matrix must be square, got {corr.shape}")
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise NotCorrelation("matrix is not symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise NotCorrelation("diagonal entries must be 1")
    try:
        L = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("correlation matrix is not positive definite")
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return (eta - 1.0) * logdet


def joint_gaussian_loglik(residual_panel: np.ndarray, sigma: ErrorCovariance) -> float:
    """Sum over time of log N(residual_t; 0, Sigma)."""
    r = np.asarray(residual_panel, dtype=float)
    if r.ndim != 2 or r.shape[0] != sigma.n:
        raise DimensionMismatch(f"panel must be ({sigma.n}, t), got {r.shape}")
    n, t = r.shape
    try:
        L = np.linalg.cholesky(sigma.sigma)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("covariance is not positive definite")
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    z = solve_triangular(L, r, lower=True)
    quad = float(np.sum(z * z))
    return -0.5 * (t * (n * math.log(2.0 * math.pi) + logdet) + quad)


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF via a rational approximation plus one
    Newton refinement through the error function (well below 1e-8 error)."""
    if not (0.0 < p < 1.0):
        raise ConfigError(f"p must be in (0, 1), got {p}")
    # Acklam's rational approximation
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    plow, phigh = 0.02425, 1 - 0.02425
    if p < plow:
        q = math.sqrt(-2 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1
        )
    elif p <= phigh:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
            ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1
        )
    else:
        q = math.sqrt(-2 * math.log(1 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1
        )
    # one Newton step: F(x) - p corrected by the density
    err = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    x -= err * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x


@dataclass
class IntervalReport:
    """Per-node bands plus the per-constraint reconciliation band."""

    forecasts: np.ndarray  # (n, T_window)
    lower: np.ndarray
    upper: np.ndarray
    rec_lower: np.ndarray  # (n_constraints, T_window)
    rec_upper: np.ndarray
    level: float
    t_from: int = 0


def prediction_intervals(
    forecasts: np.ndarray,
    sigma: ErrorCovariance,
    dag: HierarchyDag,
    level: float = 0.95,
    t_from: int = 0,
) -> IntervalReport:
    """Gaussian bands yhat +- z sqrt(Sigma_ii), and a zero-centered band
    per constraint with the propagated reconciliation variance."""
    if not (0.0 < level < 1.0):
        raise ConfigError(f"level must be in (0, 1), got {level}")
    forecasts = np.asarray(forecasts, dtype=float)
    if forecasts.ndim != 2 or forecasts.shape[0] != sigma.n:
        raise DimensionMismatch(f"forecasts must be ({sigma.n}, T), got {forecasts.shape}")
    z = normal_quantile(0.5 + level / 2.0)
    half = z * np.sqrt(np.diag(sigma.sigma))
    lower = forecasts - half[:, None]
    upper = forecasts + half[:, None]
    T = forecasts.shape[1]
    rec_half = np.array(
        [z * math.sqrt(max(reconciliation_variance(sigma, c), 0.0)) for c in dag.constraints]
    )
    rec_upper = np.tile(rec_half[:, None], (1, T))
    return IntervalReport(
        forecasts=forecasts,
        lower=lower,
        upper=upper,
        rec_lower=-rec_upper,
        rec_upper=rec_upper,
        level=level,
        t_from=t_from,
    )


def write_intervals_csv(report: IntervalReport, path) -> None:
    """Node rows then constraint rows, long format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, T = report.forecasts.shape
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", "id", "t", "forecast", "lower", "upper"])
        for i in range(n):
            for t in range(T):
                w.writerow(
                    [
                        "node",
                        i,
                        report.t_from + t,
                        repr(float(report.forecasts[i, t])),
                        repr(float(report.lower[i, t])),
                        repr(float(report.upper[i, t])),
                    ]
                )
        for ci in range(report.rec_lower.shape[0]):
            for t in range(T):
                w.writerow(
                    [
                        "rec",
                        ci,
                        report.t_from + t,
                        "",
                        repr(float(report.rec_lower[ci, t])),
                        repr(float(report.rec_upper[ci, t])),
                    ]
                )
