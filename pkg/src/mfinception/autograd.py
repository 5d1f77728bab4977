"""Reverse-mode automatic differentiation over dense numpy arrays.

A :class:`Tensor` wraps an ndarray plus an optional gradient buffer.  Ops
(see :mod:`mfinception.ops`) build an acyclic graph by attaching parent
references and a backward closure to their outputs; ``Tensor.backward`` on a
scalar walks the graph once in reverse topological order and accumulates
gradients into every reachable tensor that requires them.

Graphs are single-owner and single-threaded for the duration of a
forward/backward pass; a quiescent model may be handed to another thread.
"""

import numpy as np

from .errors import StructuralError

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (cheap inference)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        """Populate gradients of every tensor this scalar depends on."""
        if self.data.size != 1:
            raise StructuralError(
                f"backward requires a scalar, got shape {self.data.shape}"
            )
        if not self.requires_grad:
            raise StructuralError(
                "backward on a tensor with no recorded graph (built under "
                "no_grad, or no input requires gradients)"
            )
        topo = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            fn = node._backward_fn
            if fn is None or node.grad is None:
                continue
            grads = fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g.astype(parent.data.dtype, copy=False)
                else:
                    parent.grad = parent.grad + g

    def __float__(self):
        if self.data.size != 1:
            raise StructuralError("only a scalar Tensor converts to float")
        return float(self.data)

    # Small arithmetic surface, mostly for tests and loss plumbing.
    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.dtype))
        if self.data.shape != other.data.shape:
            raise StructuralError("elementwise add requires matching shapes")
        return make_node(
            self.data + other.data,
            (self, other),
            lambda dy: (dy, dy),
        )

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.dtype))
        if self.data.shape != other.data.shape:
            raise StructuralError("elementwise mul requires matching shapes")
        return make_node(
            self.data * other.data,
            (self, other),
            lambda dy: (dy * other.data, dy * self.data),
        )

    def sum(self):
        shape = self.data.shape
        return make_node(
            np.asarray(self.data.sum()),
            (self,),
            lambda dy: (np.broadcast_to(dy, shape),),
        )

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return make_node(
            self.data.reshape(shape),
            (self,),
            lambda dy: (dy.reshape(old),),
        )


def _toposort(root):
    # Iterative DFS: deep graphs (a 149-block network) overflow recursion.
    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return topo


def make_node(data, parents, backward_fn):
    """Create an op output; records the graph edge only while grad is enabled."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out
