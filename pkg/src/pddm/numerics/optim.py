"""First-order adaptive-moment optimiser (Adam)."""

import numpy as np


class Adam:
    def __init__(self, store, lr=3e-3, betas=(0.9, 0.999), eps=1e-8):
        self.store = store
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros(v.shape) for k, v in store.items()}
        self._v = {k: np.zeros(v.shape) for k, v in store.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.store.items():
            if p.grad is None:
                continue
            m = self._m[k]
            v = self._v[k]
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad * p.grad
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
