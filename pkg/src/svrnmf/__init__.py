"""Nonnegative matrix factorization via stochastic variance-reduced
multiplicative updates, with batch baselines, robust and accelerated
variants, and a reproducible convergence benchmark harness."""

__version__ = "0.1.0"

from .accel import AccelConfig, h_repeat_budget, repeat_h_update
from .batch import BatchConfig, hals_solve, mu_batch_solve, mu_batch_step
from .dataio import (
    DataFormatError,
    OutlierSpec,
    SyntheticSpec,
    gen_synthetic,
    inject_outliers,
    load_image_dir,
    load_matrix,
    normalization_projector,
    save_matrix,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    SOLVER_NAMES,
    compute_f_star,
    emit_basis_mosaic,
    emit_trace,
    load_experiment_config,
    run_experiment,
    run_solver,
)
from .model import (
    EPS_DIV,
    FactorPair,
    NumericalDivergenceError,
    OutlierModel,
    ShapeError,
    Snapshot,
    frobenius_cost,
    init_factors,
    make_snapshot,
    mul_div,
    robust_cost,
)
from .robust import (
    RobustSnapshot,
    make_robust_snapshot,
    robust_update_h,
    robust_update_r,
    rsvrmu_solve,
    rsvrmu_w_update,
)
from .stochastic import (
    GradientParts,
    StochasticConfig,
    smu_solve,
    smu_update_h,
    smu_update_w,
    stepsize_ratio,
    svrmu_epoch,
    svrmu_inner_step,
    svrmu_minibatch_inner_step,
    svrmu_solve,
    vr_grad_parts,
)
from .trace import ConvergenceTrace, TraceRecord, gradient_cost, optimality_gap, read_trace_csv

__all__ = [
    "__version__",
    "AccelConfig", "h_repeat_budget", "repeat_h_update",
    "BatchConfig", "hals_solve", "mu_batch_solve", "mu_batch_step",
    "DataFormatError", "OutlierSpec", "SyntheticSpec", "gen_synthetic",
    "inject_outliers", "load_image_dir", "load_matrix",
    "normalization_projector", "save_matrix",
    "ConfigError", "ExperimentConfig", "SOLVER_NAMES", "compute_f_star",
    "emit_basis_mosaic", "emit_trace", "load_experiment_config",
    "run_experiment", "run_solver",
    "EPS_DIV", "FactorPair", "NumericalDivergenceError", "OutlierModel",
    "ShapeError", "Snapshot", "frobenius_cost", "init_factors",
    "make_snapshot", "mul_div", "robust_cost",
    "RobustSnapshot", "make_robust_snapshot", "robust_update_h",
    "robust_update_r", "rsvrmu_solve", "rsvrmu_w_update",
    "GradientParts", "StochasticConfig", "smu_solve", "smu_update_h",
    "smu_update_w", "stepsize_ratio", "svrmu_epoch", "svrmu_inner_step",
    "svrmu_minibatch_inner_step", "svrmu_solve", "vr_grad_parts",
    "ConvergenceTrace", "TraceRecord", "gradient_cost", "optimality_gap",
    "read_trace_csv",
]
