"""Random sampling of multi-function activation assignments.

Model ``i`` of a sampling run draws from a child generator derived as
``SeedSequence(base_seed, spawn_key=(i,))``: extending a run with more
models never changes the models already drawn, and any single model can be
re-derived in isolation.  Each assignment records its derivation as the
string "base_seed:model_index".
"""

from dataclasses import dataclass, field

import numpy as np

from .activations import (
    ACTIVATION_KINDS,
    DEFAULT_ELU_ALPHA,
    PER_BLOCK,
    PER_FEATURE_MAP,
    ActivationAssignment,
)
from .config import ArchConfig, require_valid
from .errors import StructuralError
from .network import build_network

DEFAULT_MODEL_COUNT = 10


@dataclass(frozen=True)
class SamplePlan:
    """A request for `num_models` random assignments over one architecture."""

    arch: ArchConfig
    num_models: int = DEFAULT_MODEL_COUNT
    base_seed: int = 0
    activation_set: tuple = ACTIVATION_KINDS
    granularity: str = PER_BLOCK
    elu_alpha: float = DEFAULT_ELU_ALPHA
    channels_per_block: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "activation_set", tuple(self.activation_set))
        if self.num_models < 1:
            raise StructuralError(f"num_models must be >= 1 (got {self.num_models})")
        if not self.activation_set:
            raise StructuralError("activation_set must not be empty")
        if len(set(self.activation_set)) != len(self.activation_set):
            raise StructuralError(f"duplicate kinds in {self.activation_set}")
        unknown = set(self.activation_set) - set(ACTIVATION_KINDS)
        if unknown:
            raise StructuralError(f"unknown activation kinds {sorted(unknown)}")


def model_rng(base_seed, model_index):
    """The generator that draws model `model_index` of a run."""
    if model_index < 0:
        raise StructuralError(f"model index must be >= 0 (got {model_index})")
    ss = np.random.SeedSequence(base_seed, spawn_key=(model_index,))
    return np.random.default_rng(ss)


def assignment_length(arch, granularity, channels_per_block=None):
    """Slots an assignment must fill for `arch` at `granularity`."""
    if granularity == PER_BLOCK:
        return arch.cb_count
    if granularity == PER_FEATURE_MAP:
        if channels_per_block is None:
            channels_per_block = probe_channels(arch)
        return sum(channels_per_block)
    raise StructuralError(f"unknown granularity {granularity!r}")


def probe_channels(arch, init_seed=0):
    """Per-block output channel widths (via a throwaway uniform plan)."""
    return build_network(
        arch, baseline_assignment(arch), init_seed
    ).channels_per_block()


def sample_one(plan, model_index, length=None):
    """Draw model `model_index` of a plan: slots uniform over the set."""
    require_valid(plan.arch)
    if length is None:
        length = assignment_length(
            plan.arch, plan.granularity, plan.channels_per_block
        )
    rng = model_rng(plan.base_seed, model_index)
    idx = rng.integers(0, len(plan.activation_set), size=length)
    return ActivationAssignment(
        entries=tuple(plan.activation_set[i] for i in idx),
        granularity=plan.granularity,
        seed=f"{plan.base_seed}:{model_index}",
        elu_alpha=plan.elu_alpha,
    )


def sample_assignments(plan):
    """All `plan.num_models` assignments, in model-index order."""
    require_valid(plan.arch)
    length = assignment_length(plan.arch, plan.granularity, plan.channels_per_block)
    return [sample_one(plan, i, length) for i in range(plan.num_models)]


def baseline_assignment(arch, kind="RELU", granularity=PER_BLOCK,
                        elu_alpha=DEFAULT_ELU_ALPHA, channels_per_block=None):
    """The uniform single-function assignment (every slot one kind).

    With kind RELU this is the traditional CI/I counterpart of a sampled
    CMI/MI model.
    """
    require_valid(arch)
    if kind not in ACTIVATION_KINDS:
        raise StructuralError(f"unknown activation kind {kind!r}")
    if granularity == PER_BLOCK:
        length = arch.cb_count
    else:
        length = assignment_length(arch, granularity, channels_per_block)
    return ActivationAssignment(
        entries=(kind,) * length, granularity=granularity,
        seed=None, elu_alpha=elu_alpha,
    )
