import numpy as np
import pytest

from cadgcn.autodiff import Tensor
from cadgcn.errors import ShapeError
from cadgcn.optim import Adam, AdamState, adam_step


def test_zero_gradient_is_fixed_point():
    p = np.array([[1.5, -2.0]])
    state = AdamState.zeros_like(p)
    new, state = adam_step(p, np.zeros_like(p), state, 0.001)
    np.testing.assert_array_equal(new, p)
    assert state.t == 1


def test_first_step_size():
    p = np.array([0.0])
    new, state = adam_step(p, np.array([1.0]), AdamState.zeros_like(p), 0.001)
    # m_hat = v_hat = 1, so the step is -eta / (1 + eps)
    assert new[0] == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-12)
    assert state.t == 1


def test_step_bounded_by_learning_rate():
    rng = np.random.default_rng(0)
    p = np.zeros(4)
    state = AdamState.zeros_like(p)
    for _ in range(50):
        g = rng.normal(size=4) * 10 ** rng.uniform(-3, 3)
        new, state = adam_step(p, g, state, 0.01)
        # with beta1^2 < beta2 the bias-corrected ratio stays below ~1
        assert np.all(np.abs(new - p) <= 0.01 * (1 + 1e-6) * 3.2)
        p = new
    p = np.zeros(1)
    state = AdamState.zeros_like(p)
    for _ in range(20):
        new, state = adam_step(p, np.ones(1), state, 0.01)
        assert abs(new[0] - p[0]) <= 0.01 * (1 + 1e-6)
        p = new


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step(np.zeros(2), np.zeros(3), AdamState.zeros_like(np.zeros(2)), 0.1)


def test_optimizer_minimizes_quadratic():
    x = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([x], lr=0.1)
    for _ in range(300):
        x.grad = 2 * x.data
        opt.step()
    assert np.all(np.abs(x.data) < 0.05)
