"""Hierarchical forecasting with in-training reconciliation.

Train per-node forecasters under a joint objective that penalizes
incoherent forecasts on the unlabeled window, compare against post-hoc
optimal reconciliation, and propagate reconciliation uncertainty from
the forecast-error covariance.
"""

from .hierarchy import (
    AggregationConstraint,
    HierarchyDag,
    aggregate_from_leaves,
    balanced_tree,
    reconciliation_residuals,
    summation_matrix,
    validate,
)
from .objective import (
    ObjectiveConfig,
    PanelData,
    cauchy_schwarz_lower_bound,
    forecasting_loss,
    objective_gradient,
    reconciliation_loss,
    total_objective,
)
from .forecast_models import (
    LinearModel,
    MlpModel,
    NodeModels,
    SharedMlp,
    SharedModel,
    init_model,
    init_shared_mlp,
)
from .optimizers import FitResult, OptimizerConfig, gd_fit, rcd_fit
from .hts import CgConfig, ReconcilerWeights, cg_solve, reconcile, reconcile_panel
from .synthdata import GpKernelConfig, SynthConfig, SynthInstance, generate, sample_gp_series
from .uncertainty import (
    ErrorCovariance,
    PriorConfig,
    estimate_error_covariance,
    joint_gaussian_loglik,
    prediction_intervals,
    reconciliation_variance,
)
from .bench import ExperimentReport, ModelConfig, RunConfig, emit_table, run_benchmark

__version__ = "0.1.0"

__all__ = [
    "AggregationConstraint",
    "HierarchyDag",
    "aggregate_from_leaves",
    "balanced_tree",
    "reconciliation_residuals",
    "summation_matrix",
    "validate",
    "ObjectiveConfig",
    "PanelData",
    "cauchy_schwarz_lower_bound",
    "forecasting_loss",
    "objective_gradient",
    "reconciliation_loss",
    "total_objective",
    "LinearModel",
    "MlpModel",
    "NodeModels",
    "SharedMlp",
    "SharedModel",
    "init_model",
    "init_shared_mlp",
    "FitResult",
    "OptimizerConfig",
    "gd_fit",
    "rcd_fit",
    "CgConfig",
    "ReconcilerWeights",
    "cg_solve",
    "reconcile",
    "reconcile_panel",
    "GpKernelConfig",
    "SynthConfig",
    "SynthInstance",
    "generate",
    "sample_gp_series",
    "ErrorCovariance",
    "PriorConfig",
    "estimate_error_covariance",
    "joint_gaussian_loglik",
    "prediction_intervals",
    "reconciliation_variance",
    "ExperimentReport",
    "ModelConfig",
    "RunConfig",
    "emit_table",
    "run_benchmark",
]
