"""Synthetic benchmark data: GP covariates, drifting linear leaf targets,
aggregated up a hierarchy.

Covariates are stationary zero-mean series with exponential covariance
sig^2 exp(-|dt|/ell), sampled exactly by the AR(1) recursion
x_{t+1} = rho x_t + sig sqrt(1 - rho^2) z_t with rho = exp(-1/ell).
Each leaf target is X theta + (X * tau) phi + noise, where tau = t/T is
normalized time, so the effective coefficients drift linearly across the
panel and forecasters that only see X face a harder test window.
Non-leaf targets are sums of their children, so the ground truth is
coherent at every step.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DimensionMismatch
from .hierarchy import HierarchyDag, aggregate_leaf_panel, balanced_tree, validate
from .objective import PanelData


@dataclass(frozen=True)
class GpKernelConfig:
    """Exponential (Matern-1/2) kernel; length scale in time steps."""

    length_scale: float = 20.0
    marginal_std: float = 1.0

    def __post_init__(self):
        if self.length_scale <= 0 or self.marginal_std <= 0:
            raise ConfigError("length_scale and marginal_std must be > 0")


@dataclass(frozen=True)
class SynthConfig:
    m: int = 10
    t0: int = 1000
    T: int = 2000
    noise_std: float = 0.05
    coef_std: float | None = None  # default 1/sqrt(m)
    gp: GpKernelConfig = field(default_factory=GpKernelConfig)
    hierarchy: HierarchyDag = field(default_factory=balanced_tree)
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if not (1 <= self.t0 < self.T):
            raise ConfigError(f"need 1 <= t0 < T, got t0={self.t0}, T={self.T}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        validate(self.hierarchy)

    @property
    def effective_coef_std(self) -> float:
        return self.m**-0.5 if self.coef_std is None else self.coef_std

    def to_json_dict(self) -> dict:
        d = {
            "m": self.m,
            "t0": self.t0,
            "T": self.T,
            "noise_std": self.noise_std,
            "coef_std": self.coef_std,
            "gp": {"length_scale": self.gp.length_scale, "marginal_std": self.gp.marginal_std},
            "hierarchy": self.hierarchy.to_json_dict(),
            "seed": self.seed,
        }
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "SynthConfig":
        kwargs = dict(d)
        if "gp" in kwargs:
            kwargs["gp"] = GpKernelConfig(**kwargs["gp"])
        if "hierarchy" in kwargs:
            kwargs["hierarchy"] = HierarchyDag.from_json_dict(kwargs["hierarchy"])
        return cls(**kwargs)


@dataclass
class SynthInstance:
    data: PanelData
    leaf_coefficients: dict | None  # node id -> (theta, phi); diagnostics only
    config: SynthConfig


def sample_gp_series(cfg: GpKernelConfig, T: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draw of a stationary exponential-kernel GP on a regular grid."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    rho = np.exp(-1.0 / cfg.length_scale)
    z = rng.standard_normal(T)
    innov = np.empty(T)
    innov[0] = cfg.marginal_std * z[0]
    innov[1:] = cfg.marginal_std * np.sqrt(1.0 - rho * rho) * z[1:]
    # x_t = rho x_{t-1} + innov_t  via an IIR filter
    return lfilter([1.0], [1.0, -rho], innov)


def build_leaf_target(
    X: np.ndarray,
    theta: np.ndarray,
    phi: np.ndarray,
    noise_std: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """y_t = X_t . theta + (X_t * tau_t) . phi + eps_t with tau_t = (t+1)/T."""
    X = np.asarray(X, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    T, m = X.shape
    if theta.shape != (m,) or phi.shape != (m,):
        raise DimensionMismatch(f"theta and phi must have shape ({m},)")
    tau = np.arange(1, T + 1) / T
    y = X @ theta + (X * tau[:, None]) @ phi
    if noise_std > 0:
        y = y + rng.normal(0.0, noise_std, T)
    return y


def generate(cfg: SynthConfig) -> SynthInstance:
    """Deterministic instance for a config: covariates, coherent targets.

    Draw order is fixed: covariate columns first, then per leaf (in
    increasing node id) theta, phi, and the noise vector.
    """
    rng = np.random.default_rng(cfg.seed)
    X = np.column_stack([sample_gp_series(cfg.gp, cfg.T, rng) for _ in range(cfg.m)])
    dag = cfg.hierarchy
    leaves = dag.leaves()
    cs = cfg.effective_coef_std
    leaf_rows = np.empty((len(leaves), cfg.T))
    coeffs = {}
    for row, leaf in enumerate(leaves):
        theta = rng.normal(0.0, cs, cfg.m)
        phi = rng.normal(0.0, cs, cfg.m)
        leaf_rows[row] = build_leaf_target(X, theta, phi, cfg.noise_std, rng)
        coeffs[leaf] = (theta, phi)
    y = aggregate_leaf_panel(dag, leaf_rows)
    data = PanelData.from_shared(X, y, dag)
    return SynthInstance(data=data, leaf_coefficients=coeffs, config=cfg)


def write_series_csv(path, series: np.ndarray, prefix: str = "y", t_from: int = 0) -> None:
    """Long-format CSV for an (n_series, T) panel: columns t, <prefix>1.."""
    series = np.asarray(series)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + [f"{prefix}{i + 1}" for i in range(series.shape[0])])
        for t in range(series.shape[1]):
            w.writerow([t_from + t] + [repr(float(v)) for v in series[:, t]])


def read_series_csv(path) -> np.ndarray:
    """Inverse of write_series_csv; returns the (n_series, T) panel."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return np.array([[float(v) for v in row[1:]] for row in rows[1:]]).T


def save_instance(inst: SynthInstance, out_dir) -> None:
    """X.csv (t, x1..xm), Y.csv (t, y1..yn), manifest.json with the config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_series_csv(out / "X.csv", inst.data.X[0].T, prefix="x")
    write_series_csv(out / "Y.csv", inst.data.y, prefix="y")
    with open(out / "manifest.json", "w") as f:
        json.dump({"synth": inst.config.to_json_dict()}, f, indent=2)
        f.write("\n")


def load_instance(in_dir) -> SynthInstance:
    """Read back a saved instance; generating coefficients are not stored."""
    src = Path(in_dir)
    with open(src / "manifest.json") as f:
        cfg = SynthConfig.from_json_dict(json.load(f)["synth"])
    X = read_series_csv(src / "X.csv").T
    y = read_series_csv(src / "Y.csv")
    data = PanelData.from_shared(X, y, cfg.hierarchy)
    return SynthInstance(data=data, leaf_coefficients=None, config=cfg)


def replace_seed(cfg: SynthConfig, seed: int) -> SynthConfig:
    return dataclasses.replace(cfg, seed=seed)
