"""Adam with bias correction."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .layers import Param


def adam_step(param: Param, grad: np.ndarray, lr: float = 0.001, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> Param:
    """Apply one Adam update to ``param`` in place and return it."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != param.shape:
        raise ValueError(f"gradient shape {grad.shape} != parameter shape {param.shape}")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    param.step_count += 1
    t = param.step_count
    m, v = param.first_moment, param.second_moment
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param.value.data -= lr * m_hat / (np.sqrt(v_hat) + epsilon)
    return param


class Adam:
    def __init__(self, params: Iterable[Param], lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.epsilon = lr, beta1, beta2, epsilon

    def zero_grad(self):
        for p in self.params:
            p.value.grad = None

    def step(self):
        for p in self.params:
            g = p.value.grad if p.value.grad is not None else np.zeros(p.shape)
            adam_step(p, g, self.lr, self.beta1, self.beta2, self.epsilon)
