"""Activation kinds and the per-block / per-channel activation layer.

Every convolutional block in the network family owns one activation slot.
An :class:`ActivationAssignment` fills those slots, either with one kind per
block (the mode used by the evaluation protocol) or one kind per output
feature map.  A network whose every slot is RELU is exactly the traditional
uniform-RELU network.
"""

import json
from dataclasses import dataclass

import numpy as np

from .autograd import make_node
from .errors import StructuralError

ACTIVATION_KINDS = ("RELU", "SIG", "TANH", "ELU")
DEFAULT_ELU_ALPHA = 1.0

PER_BLOCK = "per-block"
PER_FEATURE_MAP = "per-feature-map"


def _check_kind(kind):
    if kind not in ACTIVATION_KINDS:
        raise StructuralError(
            f"unknown activation kind {kind!r}; legal kinds: {ACTIVATION_KINDS}"
        )


def _forward_backward(kind, x, elu_alpha):
    """Return (value, derivative) arrays for one kind on a raw array."""
    if kind == "RELU":
        return np.maximum(x, 0.0), (x > 0).astype(x.dtype)
    if kind == "SIG":
        # Stable on both tails: exp only ever sees non-positive arguments.
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        s = s.astype(x.dtype, copy=False)
        return s, s * (1.0 - s)
    if kind == "TANH":
        t = np.tanh(x)
        return t, (1.0 - t * t).astype(x.dtype, copy=False)
    if kind == "ELU":
        e = np.expm1(np.minimum(x, 0.0))
        y = np.where(x > 0, x, elu_alpha * e).astype(x.dtype, copy=False)
        d = np.where(x > 0, 1.0, elu_alpha * (e + 1.0)).astype(x.dtype, copy=False)
        return y, d
    _check_kind(kind)


def apply_activation(kind, x, elu_alpha=DEFAULT_ELU_ALPHA):
    """Apply one activation kind elementwise to a tensor.

    RELU: max(0, x) with derivative 0 at x = 0.  SIG: logistic.  TANH.
    ELU: x for x > 0, alpha * (e^x - 1) otherwise.
    """
    _check_kind(kind)
    y, d = _forward_backward(kind, x.data, elu_alpha)
    return make_node(y, (x,), lambda dy: (dy * d,))


def multi_activation_layer(kinds, x, elu_alpha=DEFAULT_ELU_ALPHA):
    """Transform feature maps, each channel by its assigned kind.

    ``kinds`` holds one kind (applied uniformly, per-block mode) or exactly
    one kind per channel of the NCHW input (per-feature-map mode).
    """
    kinds = [kinds] if isinstance(kinds, str) else list(kinds)
    for k in kinds:
        _check_kind(k)
    if len(kinds) == 1:
        return apply_activation(kinds[0], x, elu_alpha)
    c = x.data.shape[1]
    if len(kinds) != c:
        raise StructuralError(
            f"activation slice has {len(kinds)} entries for {c} channels"
        )
    y = np.empty_like(x.data)
    d = np.empty_like(x.data)
    for kind in set(kinds):
        sel = [i for i, k in enumerate(kinds) if k == kind]
        y[:, sel], d[:, sel] = _forward_backward(kind, x.data[:, sel], elu_alpha)
    return make_node(y, (x,), lambda dy: (dy * d,))


@dataclass(frozen=True)
class ActivationAssignment:
    """Ordered activation choices for every convolutional block of a network.

    ``entries`` is flat: one kind per block in block index order, or (in
    per-feature-map mode) one kind per (block, output channel) pair, blocks
    ordered by index and channels within a block in channel order.
    """

    entries: tuple
    granularity: str = PER_BLOCK
    seed: int | str | None = None  # where the draw came from, e.g. "base_seed:index"
    elu_alpha: float = DEFAULT_ELU_ALPHA

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise StructuralError("assignment must carry at least one entry")
        for k in self.entries:
            _check_kind(k)
        if self.granularity not in (PER_BLOCK, PER_FEATURE_MAP):
            raise StructuralError(f"unknown granularity {self.granularity!r}")

    def __len__(self):
        return len(self.entries)

    def slices(self, channels_per_block):
        """Split the flat entry list into one slice per block.

        ``channels_per_block`` lists each block's output channel count, in
        block index order; it is only consulted in per-feature-map mode.
        """
        if self.granularity == PER_BLOCK:
            if len(self.entries) != len(channels_per_block):
                raise StructuralError(
                    f"assignment has {len(self.entries)} entries for "
                    f"{len(channels_per_block)} blocks"
                )
            return [(k,) for k in self.entries]
        total = sum(channels_per_block)
        if len(self.entries) != total:
            raise StructuralError(
                f"assignment has {len(self.entries)} entries for "
                f"{total} feature maps"
            )
        out, pos = [], 0
        for c in channels_per_block:
            out.append(self.entries[pos : pos + c])
            pos += c
        return out

    def to_json(self):
        return json.dumps(
            {
                "granularity": self.granularity,
                "seed": self.seed,
                "elu_alpha": self.elu_alpha,
                "entries": list(self.entries),
            },
            indent=0,
        )

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            return cls(
                entries=tuple(doc["entries"]),
                granularity=doc["granularity"],
                seed=doc["seed"],
                elu_alpha=float(doc.get("elu_alpha", DEFAULT_ELU_ALPHA)),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise StructuralError(f"malformed assignment document: {exc}") from exc
