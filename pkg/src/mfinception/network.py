"""Network plans for the block-compressed Inception-V4 family.

The layer graph is Stem -> k x Inception-A -> Reduction-A -> m x Inception-B
-> Reduction-B -> n x Inception-C -> global average pool -> dropout ->
dense classifier.  Per-branch channel widths and kernel shapes follow the
reference Inception-V4 architecture and are scaled uniformly by the width
multiplier; the binding structural contract is the per-segment convolutional
block counts (stem 11, A 7, Reduction-A 4, B 10, Reduction-B 6, C 10).

Geometry: every convolution and pooling window uses half ("same") padding,
so the five stride-2 stages each halve the spatial extent (ceil division)
and the plan accepts desk-scale inputs such as 64x64.  The reference
architecture's valid-padded stem would require inputs of 75 pixels or more;
the trade is documented here because the block counts, channel ladder and
kernel shapes, which the counting claims rest on, are unchanged.

Block indexing: segments in network order; within a block, branches are
numbered with the pooling branch last; within a branch, convolutions in
application order.  Channel concatenation uses the same branch order.
"""

import numpy as np

from . import ops
from .activations import ActivationAssignment
from .config import require_valid
from .errors import StructuralError
from .layers import AvgPool2d, Context, ConvBlock, Dense, Dropout, MaxPool2d

MIN_INPUT_EXTENT = 32  # five stride-2 stages; smaller inputs degenerate
DROPOUT_RATE = 0.2


def _half(extent):
    """Output extent of a same-padded stride-2 stage (ceil division)."""
    return -(-extent // 2)


class _Builder:
    """Registers convolutional blocks in index order during construction."""

    def __init__(self, config, rng, dtype):
        self.config = config
        self.rng = rng
        self.dtype = dtype
        self.blocks = []

    def cb(self, cin, cout_ref, kernel, stride=1):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        block = ConvBlock(
            cin,
            self.config.scaled(cout_ref),
            (kh, kw),
            stride=stride,
            padding=(kh // 2, kw // 2),
            rng=self.rng,
            dtype=self.dtype,
            batchnorm=self.config.batchnorm_enabled,
        )
        block.cb_index = len(self.blocks)
        self.blocks.append(block)
        return block


def _chain(blocks, x, ctx):
    for b in blocks:
        x = b(x, ctx)
    return x


class Stem:
    """Entry segment: 11 convolutional blocks, three stride-2 stages."""

    def __init__(self, bld, cin):
        self.conv1 = bld.cb(cin, 32, 3, stride=2)
        self.conv2 = bld.cb(self.conv1.out_channels, 32, 3)
        self.conv3 = bld.cb(self.conv2.out_channels, 64, 3)

        c3 = self.conv3.out_channels
        self.mixed4_conv = bld.cb(c3, 96, 3, stride=2)
        self.mixed4_pool = MaxPool2d(3, 2, 1)
        c4 = self.mixed4_conv.out_channels + c3

        self.branch5a = [bld.cb(c4, 64, 1)]
        self.branch5a.append(bld.cb(self.branch5a[-1].out_channels, 96, 3))
        self.branch5b = [bld.cb(c4, 64, 1)]
        self.branch5b.append(bld.cb(self.branch5b[-1].out_channels, 64, (7, 1)))
        self.branch5b.append(bld.cb(self.branch5b[-1].out_channels, 64, (1, 7)))
        self.branch5b.append(bld.cb(self.branch5b[-1].out_channels, 96, 3))
        c5 = self.branch5a[-1].out_channels + self.branch5b[-1].out_channels

        self.mixed6_conv = bld.cb(c5, 192, 3, stride=2)
        self.mixed6_pool = MaxPool2d(3, 2, 1)
        self.out_channels = self.mixed6_conv.out_channels + c5

    def __call__(self, x, ctx):
        x = self.conv3(self.conv2(self.conv1(x, ctx), ctx), ctx)
        x = ops.concat_channels([self.mixed4_conv(x, ctx), self.mixed4_pool(x, ctx)])
        x = ops.concat_channels(
            [_chain(self.branch5a, x, ctx), _chain(self.branch5b, x, ctx)]
        )
        return ops.concat_channels(
            [self.mixed6_conv(x, ctx), self.mixed6_pool(x, ctx)]
        )

    def cb_spatials(self, h, w):
        s1 = (_half(h), _half(w))
        s2 = (_half(s1[0]), _half(s1[1]))
        s3 = (_half(s2[0]), _half(s2[1]))
        return [s1, s1, s1, s2, s2, s2, s2, s2, s2, s2, s3], s3


class InceptionA:
    """7 convolutional blocks over four branches."""

    def __init__(self, bld, cin):
        self.b0 = [bld.cb(cin, 96, 1)]
        self.b1 = [bld.cb(cin, 64, 1)]
        self.b1.append(bld.cb(self.b1[-1].out_channels, 96, 3))
        self.b2 = [bld.cb(cin, 64, 1)]
        self.b2.append(bld.cb(self.b2[-1].out_channels, 96, 3))
        self.b2.append(bld.cb(self.b2[-1].out_channels, 96, 3))
        self.pool = AvgPool2d(3, 1, 1)
        self.b3 = [bld.cb(cin, 96, 1)]
        self.out_channels = sum(b[-1].out_channels for b in (self.b0, self.b1, self.b2, self.b3))

    def __call__(self, x, ctx):
        return ops.concat_channels([
            _chain(self.b0, x, ctx),
            _chain(self.b1, x, ctx),
            _chain(self.b2, x, ctx),
            _chain(self.b3, self.pool(x, ctx), ctx),
        ])

    def cb_spatials(self, h, w):
        return [(h, w)] * 7, (h, w)


class ReductionA:
    """4 convolutional blocks; halves the spatial extent."""

    def __init__(self, bld, cin):
        self.b0 = [bld.cb(cin, 384, 3, stride=2)]
        self.b1 = [bld.cb(cin, 192, 1)]
        self.b1.append(bld.cb(self.b1[-1].out_channels, 224, 3))
        self.b1.append(bld.cb(self.b1[-1].out_channels, 256, 3, stride=2))
        self.pool = MaxPool2d(3, 2, 1)
        self.out_channels = (
            self.b0[-1].out_channels + self.b1[-1].out_channels + cin
        )

    def __call__(self, x, ctx):
        return ops.concat_channels([
            _chain(self.b0, x, ctx),
            _chain(self.b1, x, ctx),
            self.pool(x, ctx),
        ])

    def cb_spatials(self, h, w):
        half = (_half(h), _half(w))
        return [half, (h, w), (h, w), half], half


class InceptionB:
    """10 convolutional blocks; 1x7/7x1 factorized branches."""

    def __init__(self, bld, cin):
        self.b0 = [bld.cb(cin, 384, 1)]
        self.b1 = [bld.cb(cin, 192, 1)]
        self.b1.append(bld.cb(self.b1[-1].out_channels, 224, (1, 7)))
        self.b1.append(bld.cb(self.b1[-1].out_channels, 256, (7, 1)))
        self.b2 = [bld.cb(cin, 192, 1)]
        self.b2.append(bld.cb(self.b2[-1].out_channels, 192, (1, 7)))
        self.b2.append(bld.cb(self.b2[-1].out_channels, 224, (7, 1)))
        self.b2.append(bld.cb(self.b2[-1].out_channels, 224, (1, 7)))
        self.b2.append(bld.cb(self.b2[-1].out_channels, 256, (7, 1)))
        self.pool = AvgPool2d(3, 1, 1)
        self.b3 = [bld.cb(cin, 128, 1)]
        self.out_channels = sum(b[-1].out_channels for b in (self.b0, self.b1, self.b2, self.b3))

    def __call__(self, x, ctx):
        return ops.concat_channels([
            _chain(self.b0, x, ctx),
            _chain(self.b1, x, ctx),
            _chain(self.b2, x, ctx),
            _chain(self.b3, self.pool(x, ctx), ctx),
        ])

    def cb_spatials(self, h, w):
        return [(h, w)] * 10, (h, w)


class ReductionB:
    """6 convolutional blocks; halves the spatial extent."""

    def __init__(self, bld, cin):
        self.b0 = [bld.cb(cin, 192, 1)]
        self.b0.append(bld.cb(self.b0[-1].out_channels, 192, 3, stride=2))
        self.b1 = [bld.cb(cin, 256, 1)]
        self.b1.append(bld.cb(self.b1[-1].out_channels, 256, (1, 7)))
        self.b1.append(bld.cb(self.b1[-1].out_channels, 320, (7, 1)))
        self.b1.append(bld.cb(self.b1[-1].out_channels, 320, 3, stride=2))
        self.pool = MaxPool2d(3, 2, 1)
        self.out_channels = (
            self.b0[-1].out_channels + self.b1[-1].out_channels + cin
        )

    def __call__(self, x, ctx):
        return ops.concat_channels([
            _chain(self.b0, x, ctx),
            _chain(self.b1, x, ctx),
            self.pool(x, ctx),
        ])

    def cb_spatials(self, h, w):
        half = (_half(h), _half(w))
        return [(h, w), half, (h, w), (h, w), (h, w), half], half


class InceptionC:
    """10 convolutional blocks; branches fork into parallel 1x3/3x1 pairs."""

    def __init__(self, bld, cin):
        self.b0 = [bld.cb(cin, 256, 1)]
        self.b1_stem = bld.cb(cin, 384, 1)
        c = self.b1_stem.out_channels
        self.b1_left = bld.cb(c, 256, (1, 3))
        self.b1_right = bld.cb(c, 256, (3, 1))
        self.b2_stem = [bld.cb(cin, 384, 1)]
        self.b2_stem.append(bld.cb(self.b2_stem[-1].out_channels, 448, (1, 3)))
        self.b2_stem.append(bld.cb(self.b2_stem[-1].out_channels, 512, (3, 1)))
        c2 = self.b2_stem[-1].out_channels
        self.b2_left = bld.cb(c2, 256, (3, 1))
        self.b2_right = bld.cb(c2, 256, (1, 3))
        self.pool = AvgPool2d(3, 1, 1)
        self.b3 = [bld.cb(cin, 256, 1)]
        self.out_channels = (
            self.b0[-1].out_channels
            + self.b1_left.out_channels + self.b1_right.out_channels
            + self.b2_left.out_channels + self.b2_right.out_channels
            + self.b3[-1].out_channels
        )

    def __call__(self, x, ctx):
        y1 = self.b1_stem(x, ctx)
        y2 = _chain(self.b2_stem, x, ctx)
        return ops.concat_channels([
            _chain(self.b0, x, ctx),
            self.b1_left(y1, ctx),
            self.b1_right(y1, ctx),
            self.b2_left(y2, ctx),
            self.b2_right(y2, ctx),
            _chain(self.b3, self.pool(x, ctx), ctx),
        ])

    def cb_spatials(self, h, w):
        return [(h, w)] * 10, (h, w)


SEGMENT_CLASSES = {
    "stem": Stem,
    "inception_a": InceptionA,
    "reduction_a": ReductionA,
    "inception_b": InceptionB,
    "reduction_b": ReductionB,
    "inception_c": InceptionC,
}


class NetworkPlan:
    """A fully built network: layer graph, parameters and activation slots."""

    def __init__(self, config, assignment, init_seed, segments, blocks, head_dense):
        self.config = config
        self.assignment = assignment
        self.init_seed = init_seed
        self.segments = segments  # list of (segment kind, segment object)
        self.blocks = blocks  # every ConvBlock in index order
        self.dropout = Dropout(DROPOUT_RATE)
        self.head_dense = head_dense

    @property
    def cb_count(self):
        return len(self.blocks)

    @property
    def activation_count(self):
        return len(self.blocks)

    def channels_per_block(self):
        return [b.out_channels for b in self.blocks]

    def parameters(self):
        """Trainable (name, tensor) pairs, deterministic order."""
        out = []
        for b in self.blocks:
            for name, p in b.parameters():
                out.append((f"cb{b.cb_index:03d}.{name}", p))
        for name, p in self.head_dense.parameters():
            out.append((f"head.{name}", p))
        return out

    def buffers(self):
        """Non-trainable persisted state (batch-norm running statistics)."""
        out = []
        for b in self.blocks:
            for name, arr in b.buffers():
                out.append((f"cb{b.cb_index:03d}.bn.{name}", arr))
        return out

    def zero_grad(self):
        for _, p in self.parameters():
            p.zero_grad()

    def forward(self, x, training=False, rng=None):
        """Run the plan on an NCHW tensor; returns (N, num_classes) logits."""
        if x.data.ndim != 4 or x.data.shape[1] != self.config.channels_in:
            raise StructuralError(
                f"input must be (N, {self.config.channels_in}, H, W), got {x.data.shape}"
            )
        return self.forward_from(x, 0, training=training, rng=rng)

    def forward_from(self, y, segment_index, training=False, rng=None):
        """Resume the pass at segments[segment_index] from a cached
        intermediate activation (the previous segment's output), then run
        the head.  segment_index == len(segments) runs the head alone."""
        ctx = Context(training=training, rng=rng)
        for _, segment in self.segments[segment_index:]:
            y = segment(y, ctx)
        y = ops.global_avgpool(y)
        y = self.dropout(y, ctx)
        return self.head_dense(y, ctx)

    def __call__(self, x, training=False, rng=None):
        return self.forward(x, training=training, rng=rng)


def build_network(config, assignment, init_seed, dtype=np.float32):
    """Elaborate a validated config into a plan with initialized parameters.

    Parameters come from seeded He-style (fan-in) normal initialization;
    (init_seed, config, assignment) fully determine every value.
    """
    require_valid(config)
    if not isinstance(assignment, ActivationAssignment):
        raise StructuralError("build_network needs an ActivationAssignment")
    h, w = config.input_resolution
    if h < MIN_INPUT_EXTENT or w < MIN_INPUT_EXTENT:
        raise StructuralError(
            f"input resolution {config.input_resolution} too small for the "
            f"stride-2 stack; minimum is {MIN_INPUT_EXTENT}x{MIN_INPUT_EXTENT}"
        )

    if isinstance(init_seed, np.random.SeedSequence):
        seed_seq = init_seed
    else:
        seed_seq = np.random.SeedSequence(init_seed)
    rng = np.random.default_rng(seed_seq)
    bld = _Builder(config, rng, dtype)

    segments = []
    stem = Stem(bld, config.channels_in)
    segments.append(("stem", stem))
    c = stem.out_channels
    for _ in range(config.k):
        seg = InceptionA(bld, c)
        segments.append(("inception_a", seg))
        c = seg.out_channels
    seg = ReductionA(bld, c)
    segments.append(("reduction_a", seg))
    c = seg.out_channels
    for _ in range(config.m):
        seg = InceptionB(bld, c)
        segments.append(("inception_b", seg))
        c = seg.out_channels
    seg = ReductionB(bld, c)
    segments.append(("reduction_b", seg))
    c = seg.out_channels
    for _ in range(config.n):
        seg = InceptionC(bld, c)
        segments.append(("inception_c", seg))
        c = seg.out_channels

    head = Dense(c, config.num_classes, rng=rng, dtype=dtype)
    plan = NetworkPlan(config, assignment, init_seed, segments, bld.blocks, head)

    slices = assignment.slices(plan.channels_per_block())
    for block, kinds in zip(plan.blocks, slices):
        block.set_activation(kinds, assignment.elu_alpha)
    return plan
