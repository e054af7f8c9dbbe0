"""Adam with bias correction, as a pure step function plus a small wrapper."""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, param, **hyper):
        return cls(np.zeros_like(param), np.zeros_like(param), 0, **hyper)


def adam_step(param, grad, state, eta):
    """One Adam update. Returns ``(new_param, new_state)``; inputs are not modified."""
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ShapeError(
            f"adam_step: param {param.shape}, grad {grad.shape}, moments {state.m.shape}"
        )
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_param = param - eta * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m, v, t, state.beta1, state.beta2, state.eps)
    return new_param, new_state


class Adam:
    """Applies :func:`adam_step` to a list of tensors in place of their data."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.states = [
            AdamState.zeros_like(p.data, beta1=beta1, beta2=beta2, eps=eps)
            for p in self.params
        ]

    def step(self):
        for i, p in enumerate(self.params):
            p.data, self.states[i] = adam_step(p.data, p.grad, self.states[i], self.lr)
