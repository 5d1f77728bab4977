"""Compressed multi-function Inception-V4 toolkit.

A small numpy/numba deep-learning engine plus an Inception-V4 family whose
every convolutional block carries its own activation function, with block
counts (k, m, n) reducible under k+m+n < 14.  Includes random assignment
sampling, synthetic data, stratified cross-validation and architecture
accounting (block counts, parameters, FLOPs, serialized size).
"""

from .activations import (
    ACTIVATION_KINDS,
    PER_BLOCK,
    PER_FEATURE_MAP,
    ActivationAssignment,
    apply_activation,
    multi_activation_layer,
)
from .autograd import Tensor, no_grad
from .checkpoint import deserialize_model, serialize_model
from .config import (
    ArchConfig,
    cb_count,
    cmi_preset,
    full_preset,
    legal_compressed_triples,
    preset,
    validate_config,
)
from .data import Dataset, FoldPlan, generate_synthetic, load_manifest, stratified_folds
from .errors import StructuralError
from .metrics import accuracy, confusion_matrix, macro_f1
from .network import NetworkPlan, build_network
from .sampler import (
    SamplePlan,
    assignment_length,
    baseline_assignment,
    model_rng,
    probe_channels,
    sample_assignments,
    sample_one,
)
from .stats import ArchStats, arch_stats
from .training import (
    FoldReport,
    RunReport,
    TrainConfig,
    aggregate_reports,
    cross_validate,
    evaluate_model,
    train_model,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVATION_KINDS",
    "PER_BLOCK",
    "PER_FEATURE_MAP",
    "ActivationAssignment",
    "ArchConfig",
    "ArchStats",
    "Dataset",
    "FoldPlan",
    "FoldReport",
    "NetworkPlan",
    "RunReport",
    "SamplePlan",
    "StructuralError",
    "Tensor",
    "TrainConfig",
    "accuracy",
    "aggregate_reports",
    "apply_activation",
    "arch_stats",
    "baseline_assignment",
    "build_network",
    "cb_count",
    "cmi_preset",
    "confusion_matrix",
    "cross_validate",
    "deserialize_model",
    "evaluate_model",
    "full_preset",
    "generate_synthetic",
    "legal_compressed_triples",
    "load_manifest",
    "macro_f1",
    "multi_activation_layer",
    "no_grad",
    "preset",
    "assignment_length",
    "model_rng",
    "probe_channels",
    "sample_assignments",
    "sample_one",
    "serialize_model",
    "stratified_folds",
    "train_model",
    "validate_config",
]
