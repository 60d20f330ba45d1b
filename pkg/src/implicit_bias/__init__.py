"""Implicit bias of gradient methods on wide two-layer homogeneous networks.

Feature maps and measure projections, smooth margins, the three training
regimes, margin solvers with certificates, cluster-grid data and the
margin-based generalization bound.
"""
from .bounds import BoundInputs, BoundValue, margin_bound
from .datagen import (
    ClusterGridSpec,
    InterclassResult,
    LabeledDataset,
    interclass_distance,
    sample_cluster_grid,
    test_error,
)
from .features import (
    FeatureKind,
    FeatureModel,
    NeuronCloud,
    SignedAtoms,
    SphereMeasure,
    balance_map,
    eval_feature,
    lift_signed,
    norm_maps_pi_and_t,
    predict,
    project_h2,
    project_signed,
)
from .margins import (
    CertifyReport,
    MarginCertificate,
    SolverError,
    certify,
    f1_margin,
    gamma1_lp,
    gamma1_reference,
    gamma2_dual,
    margin,
    project_simplex,
    reference_directions,
)
from .smoothmargin import (
    LossKind,
    g_beta,
    g_beta_grad,
    g_beta_weights,
    loss,
    loss_prime,
    smooth_margin,
    smooth_margin_grad,
    soft_min,
)
from .trainer import (
    InitKind,
    InitScheme,
    Mode,
    TrainConfig,
    TrainingError,
    Trajectory,
    build_signed_features,
    init_params,
    random_feature_matrix,
    train_fixed_directions,
    train_output_layer,
    train_two_layer,
)

__version__ = "0.1.0"
