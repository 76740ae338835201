"""Deterministic federated-learning simulator with utility-based client
selection, differentially private updates, and Weibull-modeled fault
tolerance with optimal checkpointing."""

from .data import (
    ClientProfile,
    Dataset,
    FederatedDataset,
    generate_synthetic_federation,
    load_csv_dataset,
    partition_noniid,
)
from .fault import (
    Checkpoint,
    CheckpointPolicy,
    CostModelParams,
    MonotonicCostWarning,
    WeibullParams,
    checkpoint_cost_amortized,
    checkpoint_cost_paper,
    fit_weibull,
    load_checkpoint,
    optimal_checkpoint_interval,
    recover_without_checkpoint,
    sample_failure_time,
    save_checkpoint,
    weibull_failure_prob,
)
from .orchestrator import (
    GlobalState,
    RoundConfig,
    RunReport,
    aggregate,
    check_convergence,
    initial_state,
    run_round,
    run_simulation,
)
from .privacy import (
    NoiseScale,
    PrivacyBudget,
    add_gaussian_noise,
    calibrate_sigma,
    clip_update,
    sequential_budget,
)
from .selection import (
    RoundSelection,
    SelectionConfig,
    UtilityScore,
    adapt_k,
    compute_cost,
    compute_objective,
    compute_utility,
    get_available_clients,
    select_top_k,
)
from .stats import UTestResult, accuracy, auc_roc, compare_runs, mann_whitney_u
from .training import (
    Gradient,
    ModelParams,
    TrainStats,
    compute_gradient,
    evaluate,
    local_train,
    logistic_loss,
)

__version__ = "0.1.0"
