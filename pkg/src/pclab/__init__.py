"""Probabilistic vs feature contrastive learning on toy domain shift.

The tensor core lives in :mod:`pclab.numerics` (import it as a module, its
``sum``/``exp`` names shadow builtins). Everything else a typical script
needs is re-exported here.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DegenerateInputError,
    DimensionError,
    DomainError,
    PclabError,
)
from .experiment import (
    ComparisonTable,
    DatasetSpec,
    ExperimentSpec,
    GridEntry,
    PlotBundle,
    checkpoint_load,
    checkpoint_save,
    emit_plot_data,
    evaluate_checkpoint,
    run_experiment,
)
from .losses import (
    LossConfig,
    LossKind,
    PairedEmbeddings,
    ProjectionHead,
    bce_loss,
    compute_loss,
    fcl_loss,
    info_nce_core,
    lcl_loss,
    ntcl_loss,
    pcl_l2_loss,
    pcl_loss,
    pcl_mse_loss,
    sfcl_loss,
    uniformity_regularizer,
)
from .model import (
    SGD,
    ClassifierWeights,
    Encoder,
    Model,
    ModelOutputs,
    accuracy,
    forward,
    freeze_encoder_retrain_classifier,
    sgd_step,
)
from .numerics import GradTape, Tensor, backward, finite_diff_check
from .synthdata import (
    DEFAULT_SHIFT,
    IDENTITY_SHIFT,
    Benchmark,
    DomainDataset,
    FewShotSplit,
    ShiftSpec,
    augment_two_views,
    make_benchmark,
    make_domain_pair,
    make_few_shot_split,
    strong_augment,
)
from .training import (
    PseudoLabelConfig,
    RunRecord,
    TrainConfig,
    cross_entropy,
    deviation_score,
    evaluate_target,
    pseudo_label_loss,
    records_equal,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DegenerateInputError",
    "DimensionError",
    "DomainError",
    "PclabError",
    "ComparisonTable",
    "DatasetSpec",
    "ExperimentSpec",
    "GridEntry",
    "PlotBundle",
    "checkpoint_load",
    "checkpoint_save",
    "emit_plot_data",
    "evaluate_checkpoint",
    "run_experiment",
    "LossConfig",
    "LossKind",
    "PairedEmbeddings",
    "ProjectionHead",
    "bce_loss",
    "compute_loss",
    "fcl_loss",
    "info_nce_core",
    "lcl_loss",
    "ntcl_loss",
    "pcl_l2_loss",
    "pcl_loss",
    "pcl_mse_loss",
    "sfcl_loss",
    "uniformity_regularizer",
    "SGD",
    "ClassifierWeights",
    "Encoder",
    "Model",
    "ModelOutputs",
    "accuracy",
    "forward",
    "freeze_encoder_retrain_classifier",
    "sgd_step",
    "GradTape",
    "Tensor",
    "backward",
    "finite_diff_check",
    "DEFAULT_SHIFT",
    "IDENTITY_SHIFT",
    "Benchmark",
    "DomainDataset",
    "FewShotSplit",
    "ShiftSpec",
    "augment_two_views",
    "make_benchmark",
    "make_domain_pair",
    "make_few_shot_split",
    "strong_augment",
    "PseudoLabelConfig",
    "RunRecord",
    "TrainConfig",
    "cross_entropy",
    "deviation_score",
    "evaluate_target",
    "pseudo_label_loss",
    "records_equal",
    "train",
]
