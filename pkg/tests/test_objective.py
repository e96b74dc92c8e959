"""Tests for the joint objective and its gradient."""

import numpy as np
import pytest

from hfrec.errors import ConfigError, DimensionMismatch
from hfrec.forecast_models import NodeModels, SharedModel, init_model, init_shared_mlp
from hfrec.hierarchy import AggregationConstraint, HierarchyDag, balanced_tree
from hfrec.objective import (
    ObjectiveConfig,
    PanelData,
    cauchy_schwarz_lower_bound,
    forecasting_loss,
    objective_gradient,
    reconciliation_loss,
    total_objective,
)
from hfrec.synthdata import SynthConfig, generate


def test_forecasting_loss_zero_when_equal():
    a = np.arange(12.0).reshape(3, 4)
    assert forecasting_loss(a, a.copy()) == 0.0


def test_forecasting_loss_single_cell():
    assert forecasting_loss(np.array([[2.0]]), np.array([[0.0]])) == 4.0


def test_forecasting_loss_matches_loop():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(3, 5))
    a = rng.normal(size=(3, 5))
    naive = sum((f[i, t] - a[i, t]) ** 2 for i in range(3) for t in range(5))
    assert forecasting_loss(f, a) == pytest.approx(naive, rel=1e-12)


def test_forecasting_loss_shape_check():
    with pytest.raises(DimensionMismatch):
        forecasting_loss(np.zeros((2, 3)), np.zeros((3, 2)))


def test_reconciliation_loss_coherent_zero():
    from hfrec.hierarchy import aggregate_leaf_panel

    dag = balanced_tree()
    rng = np.random.default_rng(1)
    forecasts = aggregate_leaf_panel(dag, rng.normal(size=(4, 10)))
    assert reconciliation_loss(dag, forecasts, 5, 10) <= 1e-20


def test_reconciliation_loss_single_residual():
    dag = HierarchyDag(3, (AggregationConstraint(0, (1, 2)),))
    forecasts = np.array([[5.0], [2.0], [2.0]])
    assert reconciliation_loss(dag, forecasts, 0, 1) == 1.0


def test_reconciliation_loss_matches_residual_matrix():
    from hfrec.hierarchy import reconciliation_residuals

    dag = balanced_tree()
    rng = np.random.default_rng(2)
    forecasts = rng.normal(size=(7, 12))
    want = float((reconciliation_residuals(dag, forecasts, 4, 12) ** 2).sum())
    assert reconciliation_loss(dag, forecasts, 4, 12) == pytest.approx(want, rel=1e-12)


def test_reconciliation_loss_empty_window():
    dag = balanced_tree()
    assert reconciliation_loss(dag, np.random.default_rng(3).normal(size=(7, 5)), 5, 5) == 0.0


def _small_instance(seed=0, lam=2.0):
    cfg = SynthConfig(m=3, t0=8, T=12, seed=seed)
    inst = generate(cfg)
    obj_cfg = ObjectiveConfig(lam=lam, t0=8, T=12)
    return inst, obj_cfg


def test_total_objective_lam_zero_is_forecasting_loss():
    inst, _ = _small_instance()
    models = NodeModels([init_model("linear", 3, seed=i) for i in range(7)])
    cfg0 = ObjectiveConfig(lam=0.0, t0=8, T=12)
    forecasts = models.forecast_panel([Xi[:12] for Xi in inst.data.X])
    want = forecasting_loss(forecasts[:, :8], inst.data.y[:, :8])
    assert total_objective(models, inst.data, cfg0) == pytest.approx(want, rel=1e-12)


def test_total_objective_component_sum():
    """lam=10 objective equals the two pieces computed by separate calls."""
    inst, _ = _small_instance(seed=4)
    models = NodeModels([init_model("mlp", 3, h=4, seed=10 + i) for i in range(7)])
    cfg = ObjectiveConfig(lam=10.0, t0=8, T=12)
    forecasts = models.forecast_panel([Xi[:12] for Xi in inst.data.X])
    want = forecasting_loss(forecasts[:, :8], inst.data.y[:, :8]) + 10.0 * reconciliation_loss(
        inst.data.dag, forecasts, 8, 12
    )
    assert total_objective(models, inst.data, cfg) == pytest.approx(want, rel=1e-12)


def test_total_objective_monotone_in_lam():
    inst, _ = _small_instance(seed=5)
    models = NodeModels([init_model("linear", 3, seed=20 + i) for i in range(7)])
    values = [
        total_objective(models, inst.data, ObjectiveConfig(lam=lam, t0=8, T=12))
        for lam in (0.0, 0.5, 1.0, 5.0, 50.0)
    ]
    assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


def test_degenerate_zero_instance():
    dag = balanced_tree()
    X = np.zeros((6, 2))
    y = np.zeros((7, 6))
    data = PanelData.from_shared(X, y, dag)
    models = NodeModels([init_model("linear", 2, seed=i) for i in range(7)])
    for model in models.models:
        model.set_flat(np.zeros(model.n_params))
    assert total_objective(models, data, ObjectiveConfig(lam=1.0, t0=4, T=6)) == 0.0


def test_objective_config_validation():
    with pytest.raises(ConfigError):
        ObjectiveConfig(lam=-1.0, t0=2, T=4)
    with pytest.raises(ConfigError):
        ObjectiveConfig(lam=0.0, t0=5, T=4)


def _fd_objective_gradient(models, data, cfg, h=1e-5):
    out = []
    for b in range(models.n_blocks):
        flat = models.block_flat(b)
        fd = np.empty_like(flat)
        for j in range(flat.size):
            bumped = flat.copy()
            bumped[j] += h
            models.set_block_flat(b, bumped)
            up = total_objective(models, data, cfg)
            bumped[j] -= 2 * h
            models.set_block_flat(b, bumped)
            dn = total_objective(models, data, cfg)
            fd[j] = (up - dn) / (2 * h)
        models.set_block_flat(b, flat)
        out.append(fd)
    return out


@pytest.mark.parametrize("lam", [0.0, 1.0, 10.0])
@pytest.mark.parametrize("kind", ["linear", "mlp"])
def test_gradient_matches_finite_differences(kind, lam):
    inst, _ = _small_instance(seed=6)
    models = NodeModels(
        [init_model(kind, 3, h=4, seed=30 + i) for i in range(7)]
    )
    cfg = ObjectiveConfig(lam=lam, t0=8, T=12)
    analytic = objective_gradient(models, inst.data, cfg)
    fd = _fd_objective_gradient(models, inst.data, cfg)
    for g, f in zip(analytic, fd):
        assert np.abs(g - f).max() / max(np.abs(f).max(), 1e-8) < 1e-4


def test_gradient_shared_model_matches_fd():
    inst, _ = _small_instance(seed=7)
    models = SharedModel(init_shared_mlp(3, 4, 7, seed=40))
    cfg = ObjectiveConfig(lam=1.0, t0=8, T=12)
    analytic = objective_gradient(models, inst.data, cfg)
    fd = _fd_objective_gradient(models, inst.data, cfg)
    assert np.abs(analytic[0] - fd[0]).max() / max(np.abs(fd[0]).max(), 1e-8) < 1e-4


def test_penalty_gradient_vanishes_on_coherent_forecasts():
    """Coherent test-window forecasts: lam changes nothing in the gradient."""
    inst, _ = _small_instance(seed=8)
    # linear models with identical zero weights forecast zero everywhere,
    # which is coherent, so the penalty contributes no gradient
    models = NodeModels([init_model("linear", 3, seed=i) for i in range(7)])
    for model in models.models:
        model.set_flat(np.zeros(model.n_params))
    g0 = objective_gradient(models, inst.data, ObjectiveConfig(lam=0.0, t0=8, T=12))
    g10 = objective_gradient(models, inst.data, ObjectiveConfig(lam=10.0, t0=8, T=12))
    for a, b in zip(g0, g10):
        assert np.allclose(a, b, atol=1e-12)


def test_cauchy_schwarz_equality_case():
    # errors (1, -1, -1) on a 3-node constraint: residual 3, bound attained
    assert cauchy_schwarz_lower_bound(3.0, 3) == pytest.approx(3.0)
    assert cauchy_schwarz_lower_bound(0.0, 5) == 0.0
    with pytest.raises(ConfigError):
        cauchy_schwarz_lower_bound(1.0, 0)


def test_cauchy_schwarz_bound_holds_over_draws():
    """1000 random coherent truths and forecasts; bound never exceeded."""
    rng = np.random.default_rng(9)
    for _ in range(1000):
        n_children = int(rng.integers(1, 6))
        truth_children = rng.normal(size=n_children)
        truth = np.concatenate([[truth_children.sum()], truth_children])
        forecast = truth + rng.normal(size=n_children + 1) * rng.uniform(0.1, 3.0)
        residual = forecast[0] - forecast[1:].sum()
        bound = cauchy_schwarz_lower_bound(residual, n_children + 1)
        actual = float(((forecast - truth) ** 2).sum())
        assert bound <= actual + 1e-12 * max(1.0, actual)
