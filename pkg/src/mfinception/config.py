"""Architecture configuration for the block-compressed Inception-V4 family.

A configuration is the block-count triple (k, m, n) of Inception-A/B/C
blocks plus desk-scale knobs.  Compressed mode admits k in 1..4, m in 1..7,
n in 1..3 with k + m + n < 14; full mode is fixed at (4, 7, 3).  The stem,
Reduction-A and Reduction-B segments never change.
"""

from dataclasses import asdict, dataclass, replace

from .errors import StructuralError

# Convolutional blocks contributed by each fixed segment / block type.
SEGMENT_CB_COUNTS = {
    "stem": 11,
    "inception_a": 7,
    "reduction_a": 4,
    "inception_b": 10,
    "reduction_b": 6,
    "inception_c": 10,
}

COMPRESSED = "compressed"
FULL = "full"

K_RANGE = range(1, 5)
M_RANGE = range(1, 8)
N_RANGE = range(1, 4)
KMN_SUM_LIMIT = 14

FULL_TRIPLE = (4, 7, 3)

PRESETS = ("cmi1", "cmi2", "cmi3", "mi", "ci1", "ci2", "ci3", "i")


def cb_count(k, m, n):
    """Total convolutional blocks of a (k, m, n) network: 21 + 7k + 10m + 10n."""
    s = SEGMENT_CB_COUNTS
    return (
        s["stem"]
        + k * s["inception_a"]
        + s["reduction_a"]
        + m * s["inception_b"]
        + s["reduction_b"]
        + n * s["inception_c"]
    )


@dataclass(frozen=True)
class ArchConfig:
    k: int
    m: int
    n: int
    mode: str = COMPRESSED
    width_multiplier: float = 1.0
    input_resolution: tuple = (299, 299)
    channels_in: int = 3
    num_classes: int = 4
    batchnorm_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "input_resolution", tuple(self.input_resolution))

    @property
    def cb_count(self):
        return cb_count(self.k, self.m, self.n)

    def scaled(self, channels):
        """Apply the width multiplier to a reference channel count (floor 1)."""
        return max(1, int(channels * self.width_multiplier))

    def with_overrides(self, **kwargs):
        return replace(self, **kwargs)

    def to_json(self):
        doc = asdict(self)
        doc["input_resolution"] = list(self.input_resolution)
        return doc

    @classmethod
    def from_json(cls, doc):
        if not isinstance(doc, dict):
            raise StructuralError("config document must be a JSON object")
        fields = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - fields
        if unknown:
            raise StructuralError(f"unknown config fields: {sorted(unknown)}")
        missing = {"k", "m", "n"} - set(doc)
        if missing:
            raise StructuralError(f"config document missing fields: {sorted(missing)}")
        return cls(**doc)


def validate_config(config):
    """Return the list of constraint violations (empty means valid)."""
    violations = []
    k, m, n = config.k, config.m, config.n
    if config.mode == COMPRESSED:
        if k not in K_RANGE:
            violations.append(f"k must be in 1..4 (got {k})")
        if m not in M_RANGE:
            violations.append(f"m must be in 1..7 (got {m})")
        if n not in N_RANGE:
            violations.append(f"n must be in 1..3 (got {n})")
        if k + m + n >= KMN_SUM_LIMIT:
            violations.append(f"k+m+n must be < {KMN_SUM_LIMIT} (got {k + m + n})")
    elif config.mode == FULL:
        if (k, m, n) != FULL_TRIPLE:
            violations.append(f"full mode requires (k,m,n) = {FULL_TRIPLE} (got {(k, m, n)})")
    else:
        violations.append(f"unknown mode {config.mode!r}")
    if not 0.0 < config.width_multiplier <= 1.0:
        violations.append(f"width_multiplier must be in (0, 1] (got {config.width_multiplier})")
    if config.channels_in < 1:
        violations.append("channels_in must be >= 1")
    if config.num_classes < 2:
        violations.append("num_classes must be >= 2")
    if len(config.input_resolution) != 2 or min(config.input_resolution) < 1:
        violations.append(f"input_resolution must be two positive extents (got {config.input_resolution})")
    return violations


def require_valid(config):
    violations = validate_config(config)
    if violations:
        raise StructuralError("; ".join(violations))
    return config


def cmi_preset(i, **overrides):
    """Compressed architecture i: (i, i+1, i) Inception-A/B/C blocks."""
    if i not in (1, 2, 3):
        raise StructuralError(f"preset index must be 1, 2 or 3 (got {i})")
    return ArchConfig(k=i, m=i + 1, n=i, mode=COMPRESSED, **overrides)


def full_preset(**overrides):
    """The unreduced (4, 7, 3) architecture."""
    k, m, n = FULL_TRIPLE
    return ArchConfig(k=k, m=m, n=n, mode=FULL, **overrides)


def preset(name, **overrides):
    """Named presets: cmi1/cmi2/cmi3 and mi (ci1/ci2/ci3 and i share shapes)."""
    name = name.lower()
    if name in ("cmi1", "ci1"):
        return cmi_preset(1, **overrides)
    if name in ("cmi2", "ci2"):
        return cmi_preset(2, **overrides)
    if name in ("cmi3", "ci3"):
        return cmi_preset(3, **overrides)
    if name in ("mi", "i"):
        return full_preset(**overrides)
    raise StructuralError(f"unknown preset {name!r}; known: {PRESETS}")


def legal_compressed_triples():
    """All (k, m, n) admitted by the compressed-mode constraint set."""
    return [
        (k, m, n)
        for k in K_RANGE
        for m in M_RANGE
        for n in N_RANGE
        if k + m + n < KMN_SUM_LIMIT
    ]
