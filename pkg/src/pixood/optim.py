"""Adaptive-moment gradient optimizer with decoupled weight decay."""

import numpy as np


class AdamW:
    """Adam-style optimizer over a list of parameter arrays, updated in place.

    Keeps exponential moving averages of gradients and squared gradients
    with the usual 1/(1 - beta^t) bias correction; weight decay is applied
    directly to the parameters, decoupled from the adaptive term.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads, lr=None):
        """One update; lr overrides the stored rate (for schedules)."""
        if lr is None:
            lr = self.lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            p -= lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p)

    def reset_rows(self, param_index: int, rows):
        """Zero moment state for selected rows of one parameter.

        Called when an etalon is re-initialized; stale momentum would drag
        the fresh position back toward its old basin.
        """
        self.m[param_index][rows] = 0.0
        self.v[param_index][rows] = 0.0
