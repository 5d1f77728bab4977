"""Architecture accounting: block counts, sizes, FLOPs, serialized bytes.

Conventions.  parameter_count counts every scalar a checkpoint persists:
conv weights and biases, dense weights and biases, batch-norm scale/shift
and batch-norm running statistics.  flops_per_image is the multiply-
accumulate count of the convolutions and the dense head for one image at
the configured input resolution (pooling, normalization and activations
are excluded).  serialized_bytes is exact for the on-disk format:
parameter_count * bytes_per_element + the fixed checkpoint header.
"""

from dataclasses import asdict, dataclass

from .checkpoint import HEADER_BYTES, persisted_scalars
from .config import SEGMENT_CB_COUNTS
from .errors import StructuralError


@dataclass(frozen=True)
class ArchStats:
    cb_count: int
    activation_count: int
    parameter_count: int
    flops_per_image: int
    serialized_bytes: int
    bytes_per_element: int
    per_segment_cb_counts: dict

    def to_json(self):
        return asdict(self)


def _conv_macs(plan):
    """Multiply-accumulates of every convolutional block for one image."""
    h, w = plan.config.input_resolution
    macs = 0
    cursor = 0
    for kind, segment in plan.segments:
        spatials, (h, w) = segment.cb_spatials(h, w)
        if len(spatials) != SEGMENT_CB_COUNTS[kind]:
            raise AssertionError(f"{kind}: geometry walk out of step")
        for ho, wo in spatials:
            block = plan.blocks[cursor]
            cout, cin, kh, kw = block.conv.weight.shape
            macs += cout * ho * wo * cin * kh * kw
            cursor += 1
    if cursor != len(plan.blocks):
        raise AssertionError("geometry walk did not cover every block")
    return macs


def arch_stats(plan, bytes_per_element=4):
    """Compute the accounting summary of a built plan.

    bytes_per_element fixes the element width of the size report (4 by
    default: checkpoints of float32 plans); pass the plan dtype's itemsize
    to describe other precisions.
    """
    din, dout = plan.head_dense.weight.shape
    flops = _conv_macs(plan) + din * dout
    scalars = persisted_scalars(plan)
    bpe = int(bytes_per_element)
    if bpe not in (4, 8):
        raise StructuralError(
            f"bytes_per_element must be 4 or 8 (got {bytes_per_element})"
        )
    per_segment = {}
    for kind, _ in plan.segments:
        per_segment[kind] = per_segment.get(kind, 0) + SEGMENT_CB_COUNTS[kind]
    return ArchStats(
        cb_count=plan.cb_count,
        activation_count=plan.activation_count,
        parameter_count=scalars,
        flops_per_image=flops,
        serialized_bytes=scalars * bpe + HEADER_BYTES,
        bytes_per_element=bpe,
        per_segment_cb_counts=per_segment,
    )


def summary(plan):
    """JSON-ready architecture summary (config plus accounting)."""
    cfg = plan.config
    doc = {
        "k": cfg.k,
        "m": cfg.m,
        "n": cfg.n,
        "mode": cfg.mode,
        "width_multiplier": cfg.width_multiplier,
        "input_resolution": list(cfg.input_resolution),
        "num_classes": cfg.num_classes,
        "activation_granularity": plan.assignment.granularity,
    }
    doc.update(arch_stats(plan).to_json())
    return doc
