"""Tests for the finite-difference checker itself."""

import numpy as np

from sdavs.gradcheck import check_gradients, check_module_gradients, relative_error
from sdavs.nn import Linear
from sdavs.tensor import Tensor, _result, as_tensor


def broken_square(x):
    x = as_tensor(x)
    return _result(x.data ** 2, (x,), lambda g: (g * x.data,), 'broken_square')  # should be 2x


def test_relative_error_scale():
    assert relative_error(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.0
    assert relative_error(np.array([2.0]), np.array([1.0])) == 0.5
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


def test_checker_flags_a_wrong_gradient(rng):
    """Test that a deliberately halved gradient fails the check"""
    x = rng.normal(size=(3,))
    result = check_gradients(lambda a: broken_square(a).sum(), [x])
    assert not result.passed(1e-3)
    assert result.max_error > 0.3


def test_module_check_restores_parameters(rng):
    """Test spot checks on a Linear layer and that parameter values are restored"""
    layer = Linear(4, 2, rng)
    x = rng.normal(size=(5, 4))
    before = layer.weight.data.astype(np.float64).copy()
    result = check_module_gradients(layer, lambda: (layer(Tensor(x)) * layer(Tensor(x))).sum(), rng, samples=4)
    assert result.labels == ['weight', 'bias']
    assert result.passed(1e-5), result.max_error
    np.testing.assert_array_equal(layer.weight.data, before)
    assert layer.weight.dtype == np.float64
