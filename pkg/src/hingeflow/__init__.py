"""Margin-driven hinge training with an exact max-margin oracle.

The package trains linear classifiers (and a small ReLU network) with a
hinge loss whose threshold ratchets upward whenever the hinge risk
clears a tolerance, measures how fast the iterates align with the exact
max-margin separator, and verifies the geometric facts that drive that
convergence on every run.
"""

from .diagnostics import (
    LemmaReport,
    RateFit,
    cosine_gap,
    direction_distance,
    fit_rate,
    margin_gap,
    norm_growth_report,
    run_lemma_suite,
    scaled_sup_stability,
)
from .estimators import (
    CompleteHingeClassifier,
    HingeMLPClassifier,
    MaxMarginClassifier,
)
from .exceptions import (
    ConfigError,
    HingeflowError,
    NumericalError,
    SeparabilityError,
)
from .geometry import (
    Dataset,
    Hyperplane,
    MarginCertificate,
    check_dual_positivity,
    crossing_length,
    first_crossed_support,
    project_orthogonal,
    select_support_matrix,
    solve_max_margin,
)
from .harness import (
    ExperimentSpec,
    GeneratorParams,
    builtin_dataset,
    compare_losses,
    generate_separable,
    read_dataset_csv,
    run_figures_experiment,
    run_linear_experiment,
    run_mlp_experiment,
    write_dataset_csv,
)
from .losses import (
    complete_hinge,
    complete_hinge_series,
    hinge_active_term,
    logistic,
    multiclass_complete_hinge,
    normalize_gradient,
    series_band,
    vanilla_hinge,
)
from .neural import (
    MiniBatch,
    MlpConfig,
    MlpParams,
    backward,
    forward,
    init_params,
    load_mnist_subset,
    read_idx_images,
    read_idx_labels,
    train_mlp,
)
from .optimizer import (
    AssumptionWarning,
    FlowEvent,
    Trace,
    TrainConfig,
    TrainState,
    beta_intervals,
    flow_step,
    gd_step,
    initial_state,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionWarning",
    "CompleteHingeClassifier",
    "ConfigError",
    "Dataset",
    "ExperimentSpec",
    "FlowEvent",
    "GeneratorParams",
    "HingeMLPClassifier",
    "HingeflowError",
    "Hyperplane",
    "LemmaReport",
    "MarginCertificate",
    "MaxMarginClassifier",
    "MiniBatch",
    "MlpConfig",
    "MlpParams",
    "NumericalError",
    "RateFit",
    "SeparabilityError",
    "Trace",
    "TrainConfig",
    "TrainState",
    "backward",
    "beta_intervals",
    "builtin_dataset",
    "check_dual_positivity",
    "compare_losses",
    "complete_hinge",
    "complete_hinge_series",
    "cosine_gap",
    "crossing_length",
    "direction_distance",
    "first_crossed_support",
    "fit_rate",
    "flow_step",
    "forward",
    "gd_step",
    "generate_separable",
    "hinge_active_term",
    "init_params",
    "initial_state",
    "load_mnist_subset",
    "logistic",
    "margin_gap",
    "multiclass_complete_hinge",
    "norm_growth_report",
    "normalize_gradient",
    "project_orthogonal",
    "read_dataset_csv",
    "read_idx_images",
    "read_idx_labels",
    "run_figures_experiment",
    "run_lemma_suite",
    "run_linear_experiment",
    "run_mlp_experiment",
    "scaled_sup_stability",
    "select_support_matrix",
    "series_band",
    "solve_max_margin",
    "train",
    "train_mlp",
    "vanilla_hinge",
    "write_dataset_csv",
]
