"""Tests for the forecaster models and their exact gradients."""

import numpy as np
import pytest

from hfrec.errors import BadDimension, DimensionMismatch
from hfrec.forecast_models import (
    LinearModel,
    MlpModel,
    NodeModels,
    SharedMlp,
    SharedModel,
    init_model,
    init_shared_mlp,
    load_models,
    save_models,
)


def test_linear_forward():
    model = LinearModel(weights=[2.0, 0.0], bias=1.0)
    assert model.forward([3.0, 5.0]) == 7.0


def test_mlp_zero_network_is_constant():
    model = MlpModel(W1=np.zeros((3, 2)), b1=np.zeros(3), w2=np.zeros(3), b2=4.0)
    for x in ([0.0, 0.0], [1.5, -2.0], [10.0, 3.0]):
        assert model.forward(x) == 4.0


def test_mlp_relu_clamp_hand_trace():
    # h=1, W1=[1,-1], w2=2: relu(x1-x2)*2
    model = MlpModel(W1=np.array([[1.0, -1.0]]), b1=np.zeros(1), w2=np.array([2.0]), b2=0.0)
    assert model.forward([3.0, 1.0]) == 4.0
    assert model.forward([1.0, 3.0]) == 0.0


def test_forward_dimension_mismatch():
    model = LinearModel(weights=[1.0, 2.0], bias=0.0)
    with pytest.raises(DimensionMismatch):
        model.forward([1.0, 2.0, 3.0])


def test_linear_gradient_single_sample():
    # theta=0, x=(1,), y=1, squared loss: d/dw of (w*x - y)^2 at 0 is -2
    model = LinearModel(weights=[0.0], bias=0.0)
    upstream = 2.0 * (model.forward([1.0]) - 1.0)
    g = model.param_gradient([1.0], upstream)
    assert g[0] == -2.0


def test_zero_upstream_gives_zero_gradient():
    rng = np.random.default_rng(0)
    for model in (
        LinearModel(rng.normal(size=4), 0.3),
        init_model("mlp", 4, h=6, seed=1),
    ):
        g = model.param_gradient(rng.normal(size=4), 0.0)
        assert np.all(g == 0.0)


def _fd_gradient(model, x, y, h=1e-5):
    flat = model.get_flat()
    fd = np.empty_like(flat)
    for j in range(flat.size):
        bumped = flat.copy()
        bumped[j] += h
        model.set_flat(bumped)
        up = (model.forward(x) - y) ** 2
        bumped[j] -= 2 * h
        model.set_flat(bumped)
        dn = (model.forward(x) - y) ** 2
        fd[j] = (up - dn) / (2 * h)
    model.set_flat(flat)
    return fd


def test_gradient_matches_finite_differences():
    """100 random (model, x, y) draws; squared-loss gradient vs central FD."""
    rng = np.random.default_rng(7)
    for trial in range(100):
        m = int(rng.integers(1, 6))
        if trial % 2 == 0:
            model = init_model("linear", m, seed=trial)
        else:
            model = init_model("mlp", m, h=int(rng.integers(1, 8)), seed=trial)
        x = rng.normal(size=m)
        y = float(rng.normal())
        upstream = 2.0 * (model.forward(x) - y)
        analytic = model.param_gradient(x, upstream)
        fd = _fd_gradient(model, x, y)
        scale = max(np.abs(fd).max(), 1e-6)
        assert np.abs(analytic - fd).max() / scale < 1e-4


def test_panel_ops_match_scalar_ops():
    rng = np.random.default_rng(11)
    for kind, h in (("linear", None), ("mlp", 5)):
        model = init_model(kind, 3, h=h or 1, seed=2)
        X = rng.normal(size=(9, 3))
        u = rng.normal(size=9)
        fwd = model.forward_panel(X)
        assert np.allclose(fwd, [model.forward(x) for x in X], rtol=1e-10)
        g = model.param_gradient_panel(X, u)
        g_scalar = sum(model.param_gradient(X[t], u[t]) for t in range(9))
        assert np.allclose(g, g_scalar, rtol=1e-9, atol=1e-12)


def test_shared_mlp_panel_and_gradient():
    rng = np.random.default_rng(12)
    net = init_shared_mlp(3, 4, n_outputs=2, seed=5)
    X = rng.normal(size=(7, 3))
    U = rng.normal(size=(2, 7))
    fwd = net.forward_panel(X)
    assert fwd.shape == (2, 7)
    assert np.allclose(fwd[:, 0], net.forward(X[0]), rtol=1e-10)

    analytic = net.param_gradient_panel(X, U)
    flat = net.get_flat()
    h = 1e-6
    fd = np.empty_like(flat)
    for j in range(flat.size):
        b = flat.copy()
        b[j] += h
        net.set_flat(b)
        up = float((U * net.forward_panel(X)).sum())
        b[j] -= 2 * h
        net.set_flat(b)
        dn = float((U * net.forward_panel(X)).sum())
        fd[j] = (up - dn) / (2 * h)
    net.set_flat(flat)
    assert np.abs(analytic - fd).max() / max(np.abs(fd).max(), 1e-6) < 1e-4


def test_init_deterministic():
    a = init_model("mlp", 5, h=7, seed=123)
    b = init_model("mlp", 5, h=7, seed=123)
    assert np.array_equal(a.get_flat(), b.get_flat())
    c = init_model("mlp", 5, h=7, seed=124)
    assert not np.array_equal(a.get_flat(), c.get_flat())


def test_init_flat_lengths():
    assert init_model("linear", 3).n_params == 4
    assert init_model("mlp", 10, h=100).n_params == 10 * 100 + 100 + 100 + 1
    assert init_model("linear", 3).get_flat().shape == (4,)
    assert init_model("mlp", 10, h=100, seed=1).get_flat().shape == (1201,)


def test_init_biases_zero_and_scale():
    model = init_model("mlp", 400, h=900, seed=9)
    assert np.all(model.b1 == 0.0) and model.b2 == 0.0
    assert model.W1.std() == pytest.approx(400**-0.5, rel=0.05)
    assert model.w2.std() == pytest.approx(900**-0.5, rel=0.1)


def test_init_bad_dims():
    with pytest.raises(BadDimension):
        init_model("linear", 0)
    with pytest.raises(BadDimension):
        init_model("mlp", 3, h=0)
    with pytest.raises(BadDimension):
        init_model("cubist", 3)


def test_flat_round_trip_bit_exact():
    rng = np.random.default_rng(3)
    for model in (
        init_model("linear", 6, seed=31),
        init_model("mlp", 4, h=9, seed=32),
        init_shared_mlp(4, 5, 3, seed=33),
    ):
        flat = model.get_flat()
        other = model.copy()
        other.set_flat(rng.normal(size=flat.size))
        other.set_flat(flat)
        assert np.array_equal(other.get_flat(), flat)


def test_mlp_output_layer_homogeneity():
    """Scaling (w2, b2) by a power of two scales the output exactly."""
    model = init_model("mlp", 4, h=8, seed=41)
    rng = np.random.default_rng(42)
    X = rng.normal(size=(20, 4))
    base = model.forward_panel(X)
    scaled = MlpModel(model.W1, model.b1, 2.0 * model.w2, 2.0 * model.b2)
    assert np.array_equal(scaled.forward_panel(X), 2.0 * base)


def test_checkpoint_round_trip(tmp_path):
    container = NodeModels(
        [init_model("linear", 3, seed=1), init_model("mlp", 3, h=4, seed=2)]
    )
    path = tmp_path / "models.json"
    save_models(container, path)
    loaded = load_models(path)
    assert loaded.n_blocks == 2
    for b in range(2):
        assert np.array_equal(loaded.block_flat(b), container.block_flat(b))

    shared = SharedModel(init_shared_mlp(3, 4, 5, seed=3))
    save_models(shared, path)
    loaded = load_models(path)
    assert np.array_equal(loaded.block_flat(0), shared.block_flat(0))


def test_node_models_forecast_panel():
    rng = np.random.default_rng(51)
    models = NodeModels([init_model("linear", 2, seed=i) for i in range(3)])
    X = rng.normal(size=(6, 2))
    panel = models.forecast_panel([X, X, X])
    assert panel.shape == (3, 6)
    for i in range(3):
        assert np.allclose(panel[i], models.models[i].forward_panel(X))
