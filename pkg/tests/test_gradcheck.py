"""The finite-difference oracle itself."""

import numpy as np
import pytest

from kmrecon.numerics.gradcheck import finite_difference_grad, relative_error


def test_quadratic_derivative():
    grads = finite_difference_grad(lambda p: float(p["x"] ** 2),
                                   {"x": np.array(3.0)})
    assert abs(grads["x"] - 6.0) < 1e-8


def test_constant_function_zero_gradient():
    grads = finite_difference_grad(lambda p: 1.25,
                                   {"x": np.arange(6.0).reshape(2, 3)})
    assert np.all(grads["x"] == 0.0)


def test_multivariate_matches_analytic():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4))

    def f(p):
        x = p["x"]
        return float(x @ a @ x / 2.0)

    x0 = rng.normal(size=4)
    grads = finite_difference_grad(f, {"x": x0})
    expected = (a + a.T) @ x0 / 2.0
    assert relative_error(grads["x"], expected) < 1e-7


def test_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        finite_difference_grad(lambda p: 0.0, {"x": np.zeros(1)}, h=0.0)


def test_nonfinite_evaluation_error():
    with pytest.raises(FloatingPointError):
        finite_difference_grad(lambda p: float("nan"), {"x": np.zeros(1)})
