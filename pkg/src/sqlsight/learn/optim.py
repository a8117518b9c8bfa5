"""AdaMax: the infinity-norm variant of Adam.

State per parameter: first-moment average m and exponentially-decayed
infinity norm u.  The update is

    t <- t + 1
    m <- b1*m + (1-b1)*g
    u <- max(b2*u, |g|)
    theta <- theta - (lr / (1 - b1^t)) * m / (u + eps)
"""

from __future__ import annotations

import numpy as np


class AdaMax:
    def __init__(
        self,
        params: dict[str, np.ndarray],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.u = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        correction = self.lr / (1.0 - self.beta1**self.t)
        for key, g in grads.items():
            m = self.m[key]
            u = self.u[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            np.maximum(self.beta2 * u, np.abs(g), out=u)
            self.params[key] -= correction * m / (u + self.eps)
