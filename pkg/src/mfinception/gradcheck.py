"""Finite-difference gradient checking.

Gradients are verified against central differences with a perturbation
scaled to each coordinate (eps * max(1, |x|)).  Errors are reported as
max |analytic - numeric| / max(1, |analytic|, |numeric|), i.e. relative
with a unit floor.  Checks should run in float64: float32 round-off sits
right at the tolerances of interest.
"""

import numpy as np

from . import ops
from .activations import ACTIVATION_KINDS, apply_activation, multi_activation_layer
from .autograd import Tensor, no_grad
from .config import SEGMENT_CB_COUNTS
from .errors import StructuralError
from .layers import Context

DEFAULT_EPS = 1e-5
OP_TOLERANCE = 1e-5  # single op, float64
NETWORK_TOLERANCE = 1e-4  # end-to-end composition, float64


def fd_gradient(loss_fn, x, eps=DEFAULT_EPS):
    """Central-difference gradient of a scalar closure w.r.t. array x.

    `loss_fn` takes no arguments and must read `x` afresh on every call
    (e.g. a closure over a Tensor whose .data is `x`).  `x` is perturbed
    in place and restored.
    """
    x = np.asarray(x)
    grad = np.zeros(x.shape, dtype=np.float64)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            h = eps * max(1.0, abs(float(orig)))
            flat[i] = orig + h
            up = float(loss_fn())
            flat[i] = orig - h
            down = float(loss_fn())
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise StructuralError(f"gradient shapes differ: {a.shape} vs {n.shape}")
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float((np.abs(a - n) / denom).max())


def check_gradients(loss_fn, named_tensors, eps=DEFAULT_EPS):
    """Compare autograd against finite differences for each tensor.

    `named_tensors` is an iterable of (name, Tensor); every tensor must
    participate in the value `loss_fn` computes.  Returns {name: error}.
    """
    named_tensors = list(named_tensors)
    for _, t in named_tensors:
        t.zero_grad()
    loss = loss_fn()
    if loss.data.size != 1:
        raise StructuralError("gradient checks need a scalar loss")
    loss.backward()
    errors = {}
    for name, t in named_tensors:
        if t.grad is None:
            raise StructuralError(f"{name}: no gradient reached this tensor")
        analytic = t.grad.copy()
        numeric = fd_gradient(loss_fn, t.data, eps)
        errors[name] = max_relative_error(analytic, numeric)
    return errors


def _rand(rng, shape, away_from_zero=0.0):
    x = rng.standard_normal(shape)
    if away_from_zero:
        x = x + away_from_zero * np.sign(x)
    return x


def _projected(loss_parts, rng):
    """Scalar loss: project an op output against a fixed random weighting."""
    out = loss_parts()
    proj = Tensor(rng.standard_normal(out.shape))

    def loss_fn():
        return (loss_parts() * proj).sum()

    return loss_fn


def standard_op_checks(seed=0):
    """The per-op finite-difference suite: list of (name, run) pairs.

    Each run() draws small float64 inputs from `seed`, checks every input
    tensor of one op against central differences, and returns the largest
    relative error.  Shared by the test suite and the gradcheck command.
    """
    checks = []

    def add(name):
        def wrap(fn):
            checks.append((name, fn))
            return fn

        return wrap

    def conv_case(kernel, stride, padding):
        def run():
            rng = np.random.default_rng(seed)
            x = Tensor(_rand(rng, (2, 3, 8, 8)), requires_grad=True)
            w = Tensor(0.5 * _rand(rng, (4, 3) + kernel), requires_grad=True)
            b = Tensor(_rand(rng, (4,)), requires_grad=True)
            loss = _projected(lambda: ops.conv2d(x, w, b, stride, padding), rng)
            errs = check_gradients(loss, [("x", x), ("w", w), ("b", b)])
            return max(errs.values())

        return run

    add("conv2d-3x3")(conv_case((3, 3), 1, 1))
    add("conv2d-1x7")(conv_case((1, 7), 1, (0, 3)))
    add("conv2d-7x1")(conv_case((7, 1), 1, (3, 0)))
    add("conv2d-3x3-stride2")(conv_case((3, 3), 2, 1))
    add("conv2d-1x1")(conv_case((1, 1), 1, 0))

    @add("maxpool2d")
    def _():
        rng = np.random.default_rng(seed)
        x = Tensor(_rand(rng, (2, 3, 8, 8)), requires_grad=True)
        loss = _projected(lambda: ops.maxpool2d(x, 3, 2, 1), rng)
        return max(check_gradients(loss, [("x", x)]).values())

    @add("avgpool2d")
    def _():
        rng = np.random.default_rng(seed)
        x = Tensor(_rand(rng, (2, 3, 8, 8)), requires_grad=True)
        loss = _projected(lambda: ops.avgpool2d(x, 3, 1, 1), rng)
        return max(check_gradients(loss, [("x", x)]).values())

    @add("concat_channels")
    def _():
        rng = np.random.default_rng(seed)
        a = Tensor(_rand(rng, (2, 2, 5, 5)), requires_grad=True)
        b = Tensor(_rand(rng, (2, 3, 5, 5)), requires_grad=True)
        loss = _projected(lambda: ops.concat_channels([a, b]), rng)
        return max(check_gradients(loss, [("a", a), ("b", b)]).values())

    @add("dense")
    def _():
        rng = np.random.default_rng(seed)
        x = Tensor(_rand(rng, (4, 6)), requires_grad=True)
        w = Tensor(0.5 * _rand(rng, (6, 3)), requires_grad=True)
        b = Tensor(_rand(rng, (3,)), requires_grad=True)
        loss = _projected(lambda: ops.dense(x, w, b), rng)
        return max(check_gradients(loss, [("x", x), ("w", w), ("b", b)]).values())

    @add("batchnorm-train")
    def _():
        rng = np.random.default_rng(seed)
        x = Tensor(_rand(rng, (3, 4, 5, 5)), requires_grad=True)
        gamma = Tensor(1.0 + 0.2 * _rand(rng, (4,)), requires_grad=True)
        beta = Tensor(_rand(rng, (4,)), requires_grad=True)
        rm, rv = np.zeros(4), np.ones(4)
        loss = _projected(
            lambda: ops.batchnorm(x, gamma, beta, rm, rv, training=True), rng
        )
        errs = check_gradients(loss, [("x", x), ("gamma", gamma), ("beta", beta)])
        return max(errs.values())

    @add("batchnorm-eval")
    def _():
        rng = np.random.default_rng(seed)
        x = Tensor(_rand(rng, (3, 4, 5, 5)), requires_grad=True)
        gamma = Tensor(1.0 + 0.2 * _rand(rng, (4,)), requires_grad=True)
        beta = Tensor(_rand(rng, (4,)), requires_grad=True)
        rm, rv = 0.1 * _rand(rng, (4,)), 1.0 + 0.1 * np.abs(_rand(rng, (4,)))
        loss = _projected(
            lambda: ops.batchnorm(x, gamma, beta, rm, rv, training=False), rng
        )
        errs = check_gradients(loss, [("x", x), ("gamma", gamma), ("beta", beta)])
        return max(errs.values())

    def activation_case(kind):
        def run():
            rng = np.random.default_rng(seed)
            # Keep samples off the RELU/ELU kink so differences stay two-sided.
            x = Tensor(_rand(rng, (3, 4, 6, 6), away_from_zero=0.2), requires_grad=True)
            loss = _projected(lambda: apply_activation(kind, x), rng)
            return max(check_gradients(loss, [("x", x)]).values())

        return run

    for kind in ACTIVATION_KINDS:
        add(f"activation-{kind}")(activation_case(kind))

    @add("multi-activation-mixed")
    def _():
        rng = np.random.default_rng(seed)
        x = Tensor(_rand(rng, (2, 4, 5, 5), away_from_zero=0.2), requires_grad=True)
        loss = _projected(lambda: multi_activation_layer(ACTIVATION_KINDS, x), rng)
        return max(check_gradients(loss, [("x", x)]).values())

    @add("global_avgpool")
    def _():
        rng = np.random.default_rng(seed)
        x = Tensor(_rand(rng, (2, 5, 4, 4)), requires_grad=True)
        loss = _projected(lambda: ops.global_avgpool(x), rng)
        return max(check_gradients(loss, [("x", x)]).values())

    @add("dropout-train")
    def _():
        rng = np.random.default_rng(seed)
        x = Tensor(_rand(rng, (3, 4, 5, 5)), requires_grad=True)
        # Reseed per call so every forward draws the identical mask.
        loss = _projected(
            lambda: ops.dropout(x, 0.4, np.random.default_rng(99), training=True),
            rng,
        )
        return max(check_gradients(loss, [("x", x)]).values())

    @add("softmax_cross_entropy")
    def _():
        rng = np.random.default_rng(seed)
        x = Tensor(_rand(rng, (3, 4)), requires_grad=True)
        labels = rng.integers(0, 4, size=3)

        def loss_fn():
            return ops.softmax_cross_entropy(x, labels)

        return max(check_gradients(loss_fn, [("x", x)]).values())

    @add("tensor-add-mul-sum")
    def _():
        rng = np.random.default_rng(seed)
        a = Tensor(_rand(rng, (4, 5)), requires_grad=True)
        b = Tensor(_rand(rng, (4, 5)), requires_grad=True)

        def loss_fn():
            return ((a + b) * a).sum()

        return max(check_gradients(loss_fn, [("a", a), ("b", b)]).values())

    return checks


def _segment_of_param(plan, name):
    """Index into plan.segments owning a parameter name; head params map
    past the last segment (only the classifier head reruns for them)."""
    if name.startswith("head."):
        return len(plan.segments)
    start = 0
    block_index = int(name.split(".")[0][2:])
    for i, (kind, _) in enumerate(plan.segments):
        start += SEGMENT_CB_COUNTS[kind]
        if block_index < start:
            return i
    raise StructuralError(f"{name}: block index outside the plan")


def network_gradient_errors(plan, images, labels, named_params, eps=DEFAULT_EPS):
    """End-to-end check of chosen parameters through a whole plan.

    Uses the eval-mode forward (deterministic: dropout off, frozen batch
    statistics) under the cross-entropy loss.  Parameters only influence
    their own segment onward, so each finite-difference probe resumes from
    a cached prefix activation instead of rerunning the whole network.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    named_params = list(named_params)

    for _, p in named_params:
        p.zero_grad()
    loss = ops.softmax_cross_entropy(plan(Tensor(images), training=False), labels)
    loss.backward()

    errors = {}
    prefixes = {}  # segment index -> activation entering that segment
    for name, p in named_params:
        if p.grad is None:
            raise StructuralError(f"{name}: no gradient reached this tensor")
        seg = _segment_of_param(plan, name)
        if seg not in prefixes:
            ctx = Context(training=False, rng=None)
            with no_grad():
                y = Tensor(images)
                for _, segment in plan.segments[:seg]:
                    y = segment(y, ctx)
            prefixes[seg] = y.data
        prefix = prefixes[seg]

        def loss_fn():
            return ops.softmax_cross_entropy(
                plan.forward_from(Tensor(prefix), seg, training=False), labels
            )

        numeric = fd_gradient(loss_fn, p.data, eps)
        errors[name] = max_relative_error(p.grad, numeric)
    return errors

