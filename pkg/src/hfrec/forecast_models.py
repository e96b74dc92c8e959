"""Parametric per-node forecasters with exact analytic gradients.

Two single-node model kinds (linear, one-hidden-layer ReLU MLP) plus a
shared multi-output MLP. Containers group node models into parameter
blocks for the optimizers: one block per node for independent models, a
single block for the shared network.

Every model exposes a flat parameter vector; the flat round trip is
lossless. The ReLU subgradient at exactly zero is taken to be zero.
"""

from __future__ import annotations

import json

import numpy as np

from . import _kernels
from .errors import BadDimension, DimensionMismatch


def _check_vec(x, dim, name="x"):
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != dim:
        raise DimensionMismatch(f"{name} must have shape ({dim},), got {x.shape}")
    return x


class LinearModel:
    """Affine forecaster w . x + b."""

    kind = "linear"

    def __init__(self, weights, bias):
        self.weights = np.atleast_1d(np.asarray(weights))
        self.bias = self.weights.dtype.type(bias)

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def dtype(self):
        return self.weights.dtype

    @property
    def n_params(self) -> int:
        return self.input_dim + 1

    def forward(self, x) -> float:
        x = _check_vec(x, self.input_dim)
        return float(self.weights @ x + self.bias)

    def forward_panel(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.input_dim:
            raise DimensionMismatch(f"X has {X.shape[1]} columns, expected {self.input_dim}")
        return X @ self.weights + self.bias

    def param_gradient(self, x, upstream: float) -> np.ndarray:
        x = _check_vec(x, self.input_dim)
        g = np.empty(self.n_params, dtype=self.dtype)
        g[:-1] = upstream * x
        g[-1] = upstream
        return g

    def param_gradient_panel(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        g = np.empty(self.n_params, dtype=self.dtype)
        g[:-1] = X.T @ upstream
        g[-1] = upstream.sum()
        return g

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.weights, [self.bias]])

    def set_flat(self, v) -> None:
        v = _check_vec(v, self.n_params, "flat vector")
        self.weights = v[:-1].astype(self.dtype, copy=True)
        self.bias = self.dtype.type(v[-1])

    def copy(self) -> "LinearModel":
        return LinearModel(self.weights.copy(), self.bias)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "flat": [float(v) for v in self.get_flat()],
        }


class MlpModel:
    """One-hidden-layer ReLU network: w2 . relu(W1 x + b1) + b2."""

    kind = "mlp"

    def __init__(self, W1, b1, w2, b2):
        self.W1 = np.asarray(W1)
        self.b1 = np.asarray(b1)
        self.w2 = np.asarray(w2)
        self.b2 = self.W1.dtype.type(b2)
        if self.W1.ndim != 2 or self.b1.shape != (self.W1.shape[0],) or self.w2.shape != (self.W1.shape[0],):
            raise DimensionMismatch("inconsistent MLP parameter shapes")

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def dtype(self):
        return self.W1.dtype

    @property
    def n_params(self) -> int:
        h, m = self.W1.shape
        return h * m + h + h + 1

    def forward(self, x) -> float:
        x = _check_vec(x, self.input_dim)
        a = np.maximum(self.W1 @ x + self.b1, 0.0)
        return float(self.w2 @ a + self.b2)

    def forward_panel(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.input_dim:
            raise DimensionMismatch(f"X has {X.shape[1]} columns, expected {self.input_dim}")
        out = np.empty(X.shape[0], dtype=self.dtype)
        W1t = np.ascontiguousarray(self.W1.T)
        _kernels.mlp_forward(X, W1t, self.b1, self.w2, self.b2, out)
        return out

    def param_gradient(self, x, upstream: float) -> np.ndarray:
        x = _check_vec(x, self.input_dim)
        z = self.W1 @ x + self.b1
        mask = z > 0.0
        a = np.where(mask, z, 0.0)
        dz = upstream * self.w2 * mask
        return np.concatenate([np.outer(dz, x).ravel(), dz, upstream * a, [upstream]])

    def param_gradient_panel(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        h, m = self.W1.shape
        W1t = np.ascontiguousarray(self.W1.T)
        gW1t = np.zeros((m, h), dtype=self.dtype)
        gb1 = np.zeros(h, dtype=self.dtype)
        gw2 = np.zeros(h, dtype=self.dtype)
        gb2 = _kernels.mlp_backward(X, W1t, self.b1, self.w2, self.b2, upstream, gW1t, gb1, gw2)
        return np.concatenate([gW1t.T.ravel(), gb1, gw2, [gb2]]).astype(self.dtype)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    def set_flat(self, v) -> None:
        v = _check_vec(v, self.n_params, "flat vector")
        h, m = self.W1.shape
        self.W1 = v[: h * m].reshape(h, m).astype(self.dtype, copy=True)
        self.b1 = v[h * m : h * m + h].astype(self.dtype, copy=True)
        self.w2 = v[h * m + h : h * m + 2 * h].astype(self.dtype, copy=True)
        self.b2 = self.dtype.type(v[-1])

    def copy(self) -> "MlpModel":
        return MlpModel(self.W1.copy(), self.b1.copy(), self.w2.copy(), self.b2)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "flat": [float(v) for v in self.get_flat()],
        }


class SharedMlp:
    """One ReLU network forecasting all nodes at once: W2 relu(W1 x + b1) + b2."""

    kind = "shared_mlp"

    def __init__(self, W1, b1, W2, b2):
        self.W1 = np.asarray(W1)
        self.b1 = np.asarray(b1)
        self.W2 = np.asarray(W2)
        self.b2 = np.asarray(b2)
        if self.W2.shape[1] != self.W1.shape[0] or self.b2.shape != (self.W2.shape[0],):
            raise DimensionMismatch("inconsistent shared-MLP parameter shapes")

    @property
    def n_outputs(self) -> int:
        return self.W2.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def dtype(self):
        return self.W1.dtype

    @property
    def n_params(self) -> int:
        h, m = self.W1.shape
        n = self.n_outputs
        return h * m + h + n * h + n

    def forward(self, x) -> np.ndarray:
        x = _check_vec(x, self.input_dim)
        a = np.maximum(self.W1 @ x + self.b1, 0.0)
        return self.W2 @ a + self.b2

    def forward_panel(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.input_dim:
            raise DimensionMismatch(f"X has {X.shape[1]} columns, expected {self.input_dim}")
        out = np.empty((self.n_outputs, X.shape[0]), dtype=self.dtype)
        W1t = np.ascontiguousarray(self.W1.T)
        _kernels.shared_mlp_forward(X, W1t, self.b1, self.W2, self.b2, out)
        return out

    def param_gradient_panel(self, X: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """Gradient of sum_i sum_t upstream[i, t] * yhat_i(t)."""
        if upstream.shape != (self.n_outputs, X.shape[0]):
            raise DimensionMismatch(
                f"upstream must be ({self.n_outputs}, {X.shape[0]}), got {upstream.shape}"
            )
        h, m = self.W1.shape
        n = self.n_outputs
        W1t = np.ascontiguousarray(self.W1.T)
        gW1t = np.zeros((m, h), dtype=self.dtype)
        gb1 = np.zeros(h, dtype=self.dtype)
        gW2 = np.zeros((n, h), dtype=self.dtype)
        gb2 = np.zeros(n, dtype=self.dtype)
        _kernels.shared_mlp_backward(
            X, W1t, self.b1, self.W2, self.b2, upstream, gW1t, gb1, gW2, gb2
        )
        return np.concatenate([gW1t.T.ravel(), gb1, gW2.ravel(), gb2])

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def set_flat(self, v) -> None:
        v = _check_vec(v, self.n_params, "flat vector")
        h, m = self.W1.shape
        n = self.n_outputs
        k = h * m
        self.W1 = v[:k].reshape(h, m).astype(self.dtype, copy=True)
        self.b1 = v[k : k + h].astype(self.dtype, copy=True)
        self.W2 = v[k + h : k + h + n * h].reshape(n, h).astype(self.dtype, copy=True)
        self.b2 = v[k + h + n * h :].astype(self.dtype, copy=True)

    def copy(self) -> "SharedMlp":
        return SharedMlp(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "n_outputs": self.n_outputs,
            "flat": [float(v) for v in self.get_flat()],
        }


def init_model(kind: str, m: int, h: int = 100, seed: int = 0, dtype=np.float64):
    """Seeded init: weights ~ N(0, 1/fan_in), biases zero."""
    if m < 1:
        raise BadDimension(f"input dimension must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    if kind == "linear":
        return LinearModel(rng.normal(0.0, m**-0.5, m).astype(dtype), 0.0)
    if kind == "mlp":
        if h < 1:
            raise BadDimension(f"hidden dimension must be >= 1, got {h}")
        return MlpModel(
            rng.normal(0.0, m**-0.5, (h, m)).astype(dtype),
            np.zeros(h, dtype=dtype),
            rng.normal(0.0, h**-0.5, h).astype(dtype),
            0.0,
        )
    raise BadDimension(f"unknown model kind {kind!r}")


def init_shared_mlp(m: int, h: int, n_outputs: int, seed: int = 0, dtype=np.float64) -> SharedMlp:
    if m < 1 or h < 1 or n_outputs < 1:
        raise BadDimension("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    return SharedMlp(
        rng.normal(0.0, m**-0.5, (h, m)).astype(dtype),
        np.zeros(h, dtype=dtype),
        rng.normal(0.0, h**-0.5, (n_outputs, h)).astype(dtype),
        np.zeros(n_outputs, dtype=dtype),
    )


class NodeModels:
    """Independent per-node forecasters: one parameter block per node."""

    def __init__(self, models: list):
        if not models:
            raise DimensionMismatch("need at least one model")
        self.models = list(models)

    @property
    def n_nodes(self) -> int:
        return len(self.models)

    @property
    def n_blocks(self) -> int:
        return len(self.models)

    @property
    def dtype(self):
        return self.models[0].dtype

    def nodes_of_block(self, b: int) -> tuple[int, ...]:
        return (b,)

    def forecast_panel(self, X_list) -> np.ndarray:
        T = X_list[0].shape[0]
        out = np.empty((self.n_nodes, T), dtype=self.dtype)
        for i, model in enumerate(self.models):
            out[i] = model.forward_panel(X_list[i])
        return out

    def forecast_node(self, i: int, X_i: np.ndarray) -> np.ndarray:
        return self.models[i].forward_panel(X_i)

    def block_gradient(self, b: int, X_list, upstream_rows: np.ndarray) -> np.ndarray:
        return self.models[b].param_gradient_panel(
            X_list[b], np.asarray(upstream_rows).reshape(-1)
        )

    def block_flat(self, b: int) -> np.ndarray:
        return self.models[b].get_flat()

    def set_block_flat(self, b: int, v) -> None:
        self.models[b].set_flat(v)

    def update_block(self, b: int, step: float, grad: np.ndarray) -> None:
        self.models[b].set_flat(self.models[b].get_flat() - step * grad)

    def copy(self) -> "NodeModels":
        return NodeModels([m.copy() for m in self.models])

    def to_json_dict(self) -> dict:
        return {"type": "per_node", "models": [m.to_json_dict() for m in self.models]}


class SharedModel:
    """A single shared network treated as one parameter block for all nodes."""

    def __init__(self, net: SharedMlp):
        self.net = net

    @property
    def n_nodes(self) -> int:
        return self.net.n_outputs

    @property
    def n_blocks(self) -> int:
        return 1

    @property
    def dtype(self):
        return self.net.dtype

    def nodes_of_block(self, b: int) -> tuple[int, ...]:
        return tuple(range(self.n_nodes))

    def forecast_panel(self, X_list) -> np.ndarray:
        return self.net.forward_panel(X_list[0])

    def forecast_node(self, i: int, X_i: np.ndarray) -> np.ndarray:
        return self.net.forward_panel(X_i)[i]

    def block_gradient(self, b: int, X_list, upstream_rows: np.ndarray) -> np.ndarray:
        return self.net.param_gradient_panel(X_list[0], np.asarray(upstream_rows))

    def block_flat(self, b: int) -> np.ndarray:
        return self.net.get_flat()

    def set_block_flat(self, b: int, v) -> None:
        self.net.set_flat(v)

    def update_block(self, b: int, step: float, grad: np.ndarray) -> None:
        self.net.set_flat(self.net.get_flat() - step * grad)

    def copy(self) -> "SharedModel":
        return SharedModel(self.net.copy())

    def to_json_dict(self) -> dict:
        return {"type": "shared", "model": self.net.to_json_dict()}


def _model_from_json_dict(d: dict):
    flat = np.asarray(d["flat"], dtype=float)
    if d["kind"] == "linear":
        model = LinearModel(np.zeros(d["input_dim"]), 0.0)
    elif d["kind"] == "mlp":
        model = MlpModel(
            np.zeros((d["hidden_dim"], d["input_dim"])),
            np.zeros(d["hidden_dim"]),
            np.zeros(d["hidden_dim"]),
            0.0,
        )
    elif d["kind"] == "shared_mlp":
        model = SharedMlp(
            np.zeros((d["hidden_dim"], d["input_dim"])),
            np.zeros(d["hidden_dim"]),
            np.zeros((d["n_outputs"], d["hidden_dim"])),
            np.zeros(d["n_outputs"]),
        )
    else:
        raise BadDimension(f"unknown model kind {d['kind']!r}")
    model.set_flat(flat)
    return model


def save_models(container, path) -> None:
    with open(path, "w") as f:
        json.dump(container.to_json_dict(), f)
        f.write("\n")


def load_models(path):
    with open(path) as f:
        d = json.load(f)
    if d["type"] == "per_node":
        return NodeModels([_model_from_json_dict(md) for md in d["models"]])
    if d["type"] == "shared":
        return SharedModel(_model_from_json_dict(d["model"]))
    raise BadDimension(f"unknown container type {d['type']!r}")
