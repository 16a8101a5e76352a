"""Episodic meta-learning with variable task cardinality.

A width-O output head is re-wired per episode by drawing disjoint
assignment vectors, so one trained model serves any N-way task with
N at most O. Includes a first-order gradient-based engine, a
prototype-distance backend, semantic-label regularization with
optional mixing, repeat-ensembled evaluation, and a deterministic
experiment harness.
"""

from .assignment import (
    ENSEMBLE_METHODS,
    AssignmentSet,
    any_way_loss,
    ensembled_logit,
    extract,
    generate_assignments,
    predict,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_from_mapping, load_config, parse_config_text
from .episodes import (
    EpisodeSpec,
    MotherDataset,
    Task,
    batch_tasks,
    check_pool_fits,
    sample_cardinality,
    sample_task,
)
from .errors import (
    AwmetaError,
    CheckpointError,
    ConfigError,
    DimensionError,
    DomainError,
    FeatureFileError,
    SamplingError,
    UsageError,
    ValidationError,
)
from .gradcheck import GradCheckResult, run_gradcheck
from .maml import (
    CurvePoint,
    EvalResult,
    InnerConfig,
    MetaModel,
    OuterConfig,
    TrainResult,
    apply_gradients,
    evaluate,
    evaluate_sweep,
    inner_adapt,
    outer_step,
    query_loss_and_grads,
    stall_detect,
    train,
)
from .nn import LinearHead, MlpEncoder, finite_diff_grad, one_hot, softmax, softmax_cross_entropy
from .protonet import (
    ProtoModel,
    PrototypeMemory,
    ProtoTrainResult,
    compute_prototypes,
    ema_update,
    evaluate_proto,
    proto_episode_loss_and_grads,
    proto_logits,
    semantic_alignment_loss,
    train_proto,
)
from .rng import make_rng
from .semantic import (
    MixedBatch,
    SemanticConfig,
    combine_losses,
    default_ema_rate,
    default_lambda,
    mixup_batch,
    sample_mix_ratio,
    semantic_loss,
    semantic_targets_for,
)
from .synth import SynthSpec, load_features, make_gaussian_mother, make_shifted, save_features

__version__ = "0.1.0"

__all__ = [
    "ENSEMBLE_METHODS",
    "AssignmentSet",
    "AwmetaError",
    "CheckpointError",
    "ConfigError",
    "CurvePoint",
    "DimensionError",
    "DomainError",
    "EpisodeSpec",
    "EvalResult",
    "ExperimentConfig",
    "FeatureFileError",
    "GradCheckResult",
    "InnerConfig",
    "LinearHead",
    "MetaModel",
    "MixedBatch",
    "MlpEncoder",
    "MotherDataset",
    "OuterConfig",
    "ProtoModel",
    "ProtoTrainResult",
    "PrototypeMemory",
    "SamplingError",
    "SemanticConfig",
    "SynthSpec",
    "Task",
    "TrainResult",
    "UsageError",
    "ValidationError",
    "any_way_loss",
    "apply_gradients",
    "batch_tasks",
    "check_pool_fits",
    "combine_losses",
    "compute_prototypes",
    "config_from_mapping",
    "default_ema_rate",
    "default_lambda",
    "ema_update",
    "ensembled_logit",
    "evaluate",
    "evaluate_proto",
    "evaluate_sweep",
    "extract",
    "finite_diff_grad",
    "generate_assignments",
    "inner_adapt",
    "load_checkpoint",
    "load_config",
    "load_features",
    "make_gaussian_mother",
    "make_rng",
    "make_shifted",
    "mixup_batch",
    "one_hot",
    "outer_step",
    "parse_config_text",
    "predict",
    "proto_episode_loss_and_grads",
    "proto_logits",
    "query_loss_and_grads",
    "run_gradcheck",
    "sample_cardinality",
    "sample_mix_ratio",
    "sample_task",
    "save_checkpoint",
    "save_features",
    "semantic_alignment_loss",
    "semantic_loss",
    "semantic_targets_for",
    "softmax",
    "softmax_cross_entropy",
    "stall_detect",
    "train",
    "train_proto",
]
