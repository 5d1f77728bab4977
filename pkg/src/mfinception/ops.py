"""Differentiable network operations.

Each function takes :class:`~mfinception.autograd.Tensor` arguments, computes
the forward value (convolution and pooling go through the selected kernel
backend) and registers an exact backward closure on the autograd graph.
"""

import numpy as np

from . import kernels
from .autograd import Tensor, make_node
from .errors import StructuralError


def conv2d(x, w, b, stride=1, padding=0):
    """2-d cross-correlation with bias: NCHW input, OIHW weights.

    Output extent per axis is floor((size + 2*pad - k) / stride) + 1.
    Asymmetric kernels (1x7, 7x1, ...) and strides are supported.
    """
    y = kernels.conv2d_forward(x.data, w.data, b.data, stride, padding)

    def backward(dy):
        dx, dw, db = kernels.conv2d_backward(x.data, w.data, dy, stride, padding)
        return dx, dw, db

    return make_node(y, (x, w, b), backward)


def maxpool2d(x, window, stride=None, padding=0):
    """Per-window maximum; gradient routes to the first-scanned argmax."""
    if stride is None:
        stride = window
    y, idx = kernels.maxpool2d_forward(x.data, window, stride, padding)
    shape = x.data.shape

    def backward(dy):
        return (kernels.maxpool2d_backward(dy, idx, shape, window, stride, padding),)

    return make_node(y, (x,), backward)


def avgpool2d(x, window, stride=None, padding=0):
    """Per-window mean over non-padding cells; gradient spreads uniformly."""
    if stride is None:
        stride = window
    y = kernels.avgpool2d_forward(x.data, window, stride, padding)
    shape = x.data.shape

    def backward(dy):
        return (kernels.avgpool2d_backward(dy, shape, window, stride, padding),)

    return make_node(y, (x,), backward)


def concat_channels(inputs):
    """Concatenate NCHW tensors along the channel axis, in argument order."""
    if not inputs:
        raise StructuralError("concat_channels needs at least one input")
    first = inputs[0].data.shape
    for t in inputs[1:]:
        s = t.data.shape
        if s[0] != first[0] or s[2:] != first[2:]:
            raise StructuralError(
                f"concat_channels batch/spatial mismatch: {first} vs {s}"
            )
    widths = [t.data.shape[1] for t in inputs]
    y = np.concatenate([t.data for t in inputs], axis=1)
    edges = np.cumsum([0] + widths)

    def backward(dy):
        return tuple(dy[:, edges[i] : edges[i + 1]] for i in range(len(widths)))

    return make_node(y, tuple(inputs), backward)


def dense(x, w, b):
    """Affine map: (N, D) @ (D, K) + (K,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise StructuralError(
            f"dense shape mismatch: input {x.data.shape}, weights {w.data.shape}"
        )
    if b.data.shape != (w.data.shape[1],):
        raise StructuralError("dense bias must have one entry per output unit")
    y = x.data @ w.data + b.data

    def backward(dy):
        return dy @ w.data.T, x.data.T @ dy, dy.sum(axis=0)

    return make_node(y, (x, w, b), backward)


def flatten(x):
    """Collapse all non-batch axes."""
    n = x.data.shape[0]
    return x.reshape(n, -1)


def global_avgpool(x):
    """Mean over the spatial axes of an NCHW tensor, yielding (N, C)."""
    n, c, h, w = x.data.shape
    y = x.data.mean(axis=(2, 3))

    def backward(dy):
        g = np.broadcast_to(dy[:, :, None, None] / (h * w), (n, c, h, w))
        return (np.ascontiguousarray(g),)

    return make_node(y, (x,), backward)


def batchnorm(x, gamma, beta, running_mean, running_var, eps=1e-5,
              momentum=0.1, training=True):
    """Channelwise batch normalization over an NCHW tensor.

    Training mode normalizes by the batch mean/variance (biased) and folds
    them into the running buffers in place:
    ``running <- (1 - momentum) * running + momentum * batch``.
    Eval mode normalizes by the running buffers.
    """
    n, c, h, w = x.data.shape
    if n * h * w < 1:
        raise StructuralError("batchnorm requires a non-empty batch")
    if eps <= 0:
        raise StructuralError("batchnorm eps must be > 0")
    m = n * h * w
    g = gamma.data[None, :, None, None]

    if training:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
        invstd = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mean[None, :, None, None]) * invstd[None, :, None, None]
        y = g * xhat + beta.data[None, :, None, None]

        def backward(dy):
            dbeta = dy.sum(axis=(0, 2, 3))
            dgamma = (dy * xhat).sum(axis=(0, 2, 3))
            # Batch statistics depend on x, so the Jacobian couples elements.
            s = (g * invstd[None, :, None, None] / m)
            dx = s * (
                m * dy
                - dbeta[None, :, None, None]
                - xhat * dgamma[None, :, None, None]
            )
            return dx, dgamma, dbeta

        return make_node(y, (x, gamma, beta), backward)

    invstd = 1.0 / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean[None, :, None, None]) * invstd[None, :, None, None]
    y = g * xhat + beta.data[None, :, None, None]

    def backward(dy):
        dbeta = dy.sum(axis=(0, 2, 3))
        dgamma = (dy * xhat).sum(axis=(0, 2, 3))
        dx = dy * g * invstd[None, :, None, None]
        return dx, dgamma, dbeta

    return make_node(y, (x, gamma, beta), backward)


def dropout(x, p, rng=None, training=True):
    """Inverted dropout; identity when evaluating or p == 0."""
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise StructuralError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    y = x.data * keep

    def backward(dy):
        return (dy * keep,)

    return make_node(y, (x,), backward)


def softmax_cross_entropy(logits, labels):
    """Mean negative log softmax probability of the labelled class.

    ``logits``: (N, K) tensor; ``labels``: integer class indices in [0, K).
    Stabilized by row-max subtraction; gradient is (softmax - onehot) / N.
    """
    z = logits.data
    if z.ndim != 2:
        raise StructuralError("softmax_cross_entropy expects (N, K) logits")
    labels = np.asarray(labels)
    n, k = z.shape
    if labels.shape != (n,):
        raise StructuralError("labels must be one class index per row")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise StructuralError(f"label out of range [0, {k})")

    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    logp = shifted - np.log(total)
    loss = -logp[np.arange(n), labels].mean()
    softmax = exp / total
    if not np.isfinite(loss):
        # Non-finite values surface here (the scalar boundary every training
        # step crosses) instead of propagating silently.
        raise ArithmeticError(f"non-finite loss {loss!r}")

    def backward(dy):
        grad = softmax.copy()
        grad[np.arange(n), labels] -= 1.0
        grad *= dy / n
        return (grad.astype(z.dtype, copy=False),)

    return make_node(np.asarray(loss, dtype=z.dtype), (logits,), backward)


def sgd_step(params, lr, momentum=0.0, velocities=None):
    """One SGD-with-momentum update over parameter tensors, in place.

    v <- momentum * v + grad;  p <- p - lr * v.  Returns the velocity
    buffers so callers can carry them across steps.
    """
    if lr <= 0:
        raise StructuralError("learning rate must be > 0")
    if not 0.0 <= momentum < 1.0:
        raise StructuralError("momentum must be in [0, 1)")
    params = list(params)
    if velocities is None:
        velocities = [np.zeros_like(p.data) for p in params]
    for p, v in zip(params, velocities):
        if p.grad is None:
            continue
        if p.grad.shape != p.data.shape:
            raise StructuralError("gradient/parameter shape mismatch")
        v *= momentum
        v += p.grad
        p.data -= lr * v
    return velocities
