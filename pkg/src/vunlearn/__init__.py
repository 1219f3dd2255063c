"""Removing sensitive-attribute information from learned representations.

The package combines an exact discrete mutual-information oracle (for
verifying the information inequalities the method rests on), variational
estimators for the continuous case, a coefficient admissibility layer, a
two-branch trainer with gradient reversal on sensitive attributes, and a
post-hoc attacker-based evaluator. `vunlearn.cli` exposes the pipeline as
generate / train / evaluate / report subcommands.
"""

from .detachment_loss import (
    CoefficientSet,
    LossBreakdown,
    derive_coefficients,
    exact_detachment_loss,
    exact_surrogate_on_system,
    surrogate_gap_bound,
    surrogate_gradients,
    surrogate_loss,
)
from .errors import (
    CoefficientError,
    ConfigurationError,
    ContainerChecksumError,
    ContainerError,
    ContainerFormatError,
    ContainerTruncationError,
    ContainerVersionError,
    InvariantError,
    NotFittedError,
    OracleSizeError,
    TrainingDivergedError,
    VunlearnError,
)
from .evaluator import (
    AttackerConfig,
    EvaluationReport,
    chance_level,
    count_macs,
    count_params,
    efficiency_report,
    measure_efficacy,
    median_epoch_seconds,
    measure_utility,
    reconstruction_probe,
    time_inference,
    train_attacker,
)
from .mi_estimators import (
    ClassifierEstimator,
    EstimatorConfig,
    ReconstructionEstimator,
    default_hidden,
    fit_classifier,
    fit_reconstruction,
    label_entropy,
    load_estimator,
    reconstruction_score,
    save_estimator,
)
from .mi_oracle import (
    DiscreteChannel,
    DiscreteJoint,
    FactorSystem,
    InequalityCheck,
    compose_markov_chain,
    conditional_mutual_information,
    empirical_joint,
    entropy,
    load_factor_system,
    make_factor_system,
    mutual_information,
    random_factor_system,
    save_factor_system,
    verify_detachment_inequality,
)
from .synthgen import (
    FactorDataset,
    GeneratorSpec,
    SplitIndices,
    ablate_sensitive,
    dataset_checksum,
    generate_dataset,
    load_dataset,
    mixing_matrix,
    save_dataset,
)
from .trainer import (
    AuxiliaryHead,
    ModelSpec,
    SplitModel,
    TrainConfig,
    TrainTrace,
    gradient_check,
    train_baseline,
    train_unlearn,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
