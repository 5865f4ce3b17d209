"""Boosting black-box variational inference via functional Frank-Wolfe."""

from .densities import (
    BaseDensity,
    CoarseGridError,
    Family,
    Mixture,
    QuadratureGrid,
    base_log_prob,
    entropy_closed_form,
    kl_gaussian_closed,
    mixture_log_prob,
    quadrature_kl,
    sup_norm,
)
from .models import (
    Dataset,
    TargetModel,
    auroc,
    logistic_regression_model,
    matrix_factorization_model,
    predictive_metrics,
    synthetic_bimodal_target,
)
from .lmo import (
    Estimator,
    InitScheme,
    LambdaSchedule,
    LmoConfig,
    LmoResult,
    elbo_estimate,
    lambda_at,
    lmo_solve,
    relbo_estimate,
    relbo_grad,
)
from .boosting import (
    BoostTrace,
    FwConfig,
    GapEstimate,
    IterationRecord,
    Variant,
    certificate_gap,
    curvature_probe,
    duality_gap_estimate,
    fixed_step_gamma,
    fully_corrective_weights,
    line_search_gamma,
    mixture_step,
    run_boosting,
)
from .harness import (
    ExperimentConfig,
    RunSummary,
    load_csv,
    make_lowrank_matrix,
    make_separable_classification,
    run_experiment,
    split,
    write_csv,
)

__version__ = "0.1.0"
