"""Parameter-holding layers used to assemble networks.

Layers are lightweight: they own their parameter tensors and expose
``__call__(x, ctx)`` where ``ctx`` carries the train/eval flag and the
dropout rng.  Parameter iteration order is construction order, which keeps
initialization and checkpoints deterministic.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .activations import multi_activation_layer
from .autograd import Tensor
from .errors import StructuralError


@dataclass
class Context:
    """Per-forward run state."""

    training: bool = False
    rng: np.random.Generator | None = None


class Layer:
    def parameters(self):
        """Yield (name, Tensor) pairs in deterministic order."""
        return iter(())

    def buffers(self):
        """Yield (name, ndarray) pairs for non-trainable state."""
        return iter(())


class Conv2d(Layer):
    def __init__(self, cin, cout, kernel, stride=1, padding=0, *, rng, dtype):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        fan_in = cin * kh * kw
        scale = np.sqrt(2.0 / fan_in)
        self.weight = Tensor(
            rng.standard_normal((cout, cin, kh, kw)) * scale,
            requires_grad=True, dtype=dtype,
        )
        self.bias = Tensor(np.zeros(cout), requires_grad=True, dtype=dtype)
        self.stride = stride
        self.padding = padding

    @property
    def out_channels(self):
        return self.weight.shape[0]

    def parameters(self):
        yield "weight", self.weight
        yield "bias", self.bias

    def __call__(self, x, ctx):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Layer):
    def __init__(self, channels, *, dtype, eps=1e-5, momentum=0.1):
        self.gamma = Tensor(np.ones(channels), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.eps = eps
        self.momentum = momentum

    def parameters(self):
        yield "gamma", self.gamma
        yield "beta", self.beta

    def buffers(self):
        yield "running_mean", self.running_mean
        yield "running_var", self.running_var

    def __call__(self, x, ctx):
        return ops.batchnorm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            eps=self.eps, momentum=self.momentum, training=ctx.training,
        )


class Dense(Layer):
    def __init__(self, din, dout, *, rng, dtype):
        scale = np.sqrt(2.0 / din)
        self.weight = Tensor(
            rng.standard_normal((din, dout)) * scale, requires_grad=True, dtype=dtype
        )
        self.bias = Tensor(np.zeros(dout), requires_grad=True, dtype=dtype)

    def parameters(self):
        yield "weight", self.weight
        yield "bias", self.bias

    def __call__(self, x, ctx):
        return ops.dense(x, self.weight, self.bias)


class MaxPool2d(Layer):
    def __init__(self, window, stride=None, padding=0):
        self.window, self.stride, self.padding = window, stride, padding

    def __call__(self, x, ctx):
        return ops.maxpool2d(x, self.window, self.stride, self.padding)


class AvgPool2d(Layer):
    def __init__(self, window, stride=None, padding=0):
        self.window, self.stride, self.padding = window, stride, padding

    def __call__(self, x, ctx):
        return ops.avgpool2d(x, self.window, self.stride, self.padding)


class Dropout(Layer):
    def __init__(self, p):
        self.p = p

    def __call__(self, x, ctx):
        return ops.dropout(x, self.p, ctx.rng, training=ctx.training)


class ConvBlock(Layer):
    """Convolution -> (batch norm) -> activation layer: the unit of counting.

    Each instance owns exactly one activation slot.  The slot holds one kind
    (whole-block) or one kind per output channel, and is filled by the
    network builder from an :class:`ActivationAssignment`.
    """

    def __init__(self, cin, cout, kernel, stride=1, padding=0, *,
                 rng, dtype, batchnorm=True):
        self.conv = Conv2d(cin, cout, kernel, stride, padding, rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(cout, dtype=dtype) if batchnorm else None
        self.activation_kinds = None
        self.elu_alpha = 1.0
        self.cb_index = None
        # When set (a Tensor -> Tensor callable), replaces the assignment
        # dispatch entirely, e.g. to pin a hard-coded activation.
        self.activation_override = None

    @property
    def out_channels(self):
        return self.conv.out_channels

    def set_activation(self, kinds, elu_alpha=1.0):
        kinds = tuple([kinds] if isinstance(kinds, str) else kinds)
        if len(kinds) not in (1, self.out_channels):
            raise StructuralError(
                f"block {self.cb_index}: slice of {len(kinds)} kinds does not "
                f"match 1 or {self.out_channels} channels"
            )
        self.activation_kinds = kinds
        self.elu_alpha = elu_alpha

    def parameters(self):
        for name, p in self.conv.parameters():
            yield f"conv.{name}", p
        if self.bn is not None:
            for name, p in self.bn.parameters():
                yield f"bn.{name}", p

    def buffers(self):
        if self.bn is not None:
            yield from self.bn.buffers()

    def __call__(self, x, ctx):
        if self.activation_kinds is None and self.activation_override is None:
            raise StructuralError(
                f"block {self.cb_index} has no activation assigned"
            )
        y = self.conv(x, ctx)
        if self.bn is not None:
            y = self.bn(y, ctx)
        if self.activation_override is not None:
            return self.activation_override(y)
        return multi_activation_layer(self.activation_kinds, y, self.elu_alpha)
