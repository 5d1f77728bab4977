"""Tensor and reverse-mode machinery."""

import numpy as np
import pytest

from mfinception.autograd import Tensor, is_grad_enabled, make_node, no_grad
from mfinception.errors import StructuralError
from mfinception.gradcheck import check_gradients


def test_tensor_basics():
    t = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    assert t.shape == (2, 3)
    assert t.grad is None
    t.zero_grad()
    assert t.grad is None  # zero_grad on a fresh tensor stays empty


def test_scalar_float_conversion():
    assert float(Tensor(np.array(2.5))) == 2.5
    with pytest.raises(StructuralError):
        float(Tensor(np.zeros(3)))


def test_backward_requires_scalar():
    t = Tensor(np.ones(4), requires_grad=True)
    y = t + t
    with pytest.raises(StructuralError):
        y.backward()


def test_add_mul_sum_values_and_grads():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        loss = ((a + b) * a).sum()
        loss.backward()
        # d/da [(a+b)*a] = 2a + b, d/db = a
        assert np.allclose(a.grad, 2 * a.data + b.data, atol=1e-12)
        assert np.allclose(b.grad, a.data, atol=1e-12)


def test_gradient_accumulates_over_reuse():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = (x * x) + (x * x)  # x used four times in total
    y.sum().backward()
    assert np.allclose(x.grad, [12.0])


def test_reshape_round_trip_gradient():
    x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
    y = x.reshape(2, 6).reshape(12).sum()
    y.backward()
    assert x.grad.shape == (3, 4)
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_no_grad_blocks_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    assert is_grad_enabled()
    with no_grad():
        assert not is_grad_enabled()
        y = (x * x).sum()
    assert y.grad is None
    with pytest.raises(StructuralError):
        y.backward()  # no graph was recorded, y does not require grad


def test_deep_chain_does_not_recurse():
    # iterative toposort must survive graphs far beyond the recursion limit
    x = Tensor(np.array([1.0]), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y + x
    y.sum().backward()
    assert np.allclose(x.grad, [5001.0])


def test_diamond_graph_grad():
    x = Tensor(np.array([2.0]), requires_grad=True)
    a = x * x
    b = x + x
    ((a + b) * (a + b)).sum().backward()
    # f = (x^2 + 2x)^2, f' = 2(x^2+2x)(2x+2) = 2*8*6 = 96
    assert np.allclose(x.grad, [96.0])


def test_make_node_custom_op_checks_against_fd():
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((4, 3)), requires_grad=True)

    def cube():
        return make_node(x.data**3, (x,), lambda dy: (dy * 3 * x.data**2,)).sum()

    errs = check_gradients(cube, [("x", x)])
    assert errs["x"] <= 1e-6


def test_dtype_preserved_through_ops():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    y = (x + x) * x
    assert y.data.dtype == np.float32
    y.sum().backward()
    assert x.grad.dtype == np.float32


def test_mismatched_shapes_rejected():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((3, 2)))
    with pytest.raises(StructuralError):
        a + b
    with pytest.raises(StructuralError):
        a * b
