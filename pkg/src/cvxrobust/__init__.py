"""Convex adversarial training and certification for two-layer networks."""

from .attack import AttackReport, empirical_worst_case, fgsm, robust_accuracy
from .conic import (
    ConeSpec,
    ConicProgram,
    ConicSolution,
    ProgramBuilder,
    SolverSettings,
    smat,
    solve,
    svec,
)
from .data import Dataset, load_csv, split, standardize
from .errors import DomainError, NumericalError, ParseError, SolverError
from .polynet import (
    ActivationCoeffs,
    QuadraticClassifier,
    TwoLayerNetwork,
    classifier_from_neurons,
    default_coeffs,
    fit_relu_poly,
    neural_decomposition,
)
from .polytrain import (
    RobustCertificate,
    SdpBlocks,
    TrainConfig,
    build_robust_sdp,
    build_standard_sdp,
    decision_distance,
    decision_distances,
    extract_classifier,
    train,
)
from .relutrain import (
    GatedLinearModel,
    PenaltyConfig,
    SignPatternSet,
    linear_min_over_ball,
    recover_weights,
    relu_forward,
    sample_sign_patterns,
    train_convex_relu,
    worst_case_output,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationCoeffs",
    "AttackReport",
    "ConeSpec",
    "ConicProgram",
    "ConicSolution",
    "Dataset",
    "DomainError",
    "GatedLinearModel",
    "NumericalError",
    "ParseError",
    "PenaltyConfig",
    "ProgramBuilder",
    "QuadraticClassifier",
    "RobustCertificate",
    "SdpBlocks",
    "SignPatternSet",
    "SolverError",
    "SolverSettings",
    "TrainConfig",
    "TwoLayerNetwork",
    "build_robust_sdp",
    "build_standard_sdp",
    "classifier_from_neurons",
    "decision_distance",
    "decision_distances",
    "default_coeffs",
    "empirical_worst_case",
    "extract_classifier",
    "fgsm",
    "fit_relu_poly",
    "linear_min_over_ball",
    "load_csv",
    "neural_decomposition",
    "recover_weights",
    "relu_forward",
    "robust_accuracy",
    "sample_sign_patterns",
    "smat",
    "solve",
    "split",
    "standardize",
    "svec",
    "train",
    "train_convex_relu",
    "worst_case_output",
]
