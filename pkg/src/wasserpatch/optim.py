"""Small descent helpers shared by the reconstruction and the TV baseline."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam update on a single array (bias-corrected, fixed learning rate)."""

    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, x, grad):
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def backtracking_step(x, value, grad, fun, step, min_step=1e-12):
    """Gradient step that halves ``step`` until ``fun`` does not increase.

    Returns ``(x_new, value_new, step)``; the returned step is the accepted
    one, so callers can reuse it (optionally enlarged) next time.
    """
    while True:
        x_new = x - step * grad
        value_new = fun(x_new)
        if np.isfinite(value_new) and value_new <= value:
            return x_new, value_new, step
        if step < min_step:
            return x, value, step
        step *= 0.5
