"""Adam with bias correction.

Gradients are consumed and cleared by `step()`; calling backward several
times between steps therefore accumulates into one update.
"""

import numpy as np

from . import backend
from .errors import ConfigError


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {lr}")
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p._grad
            if g is None:
                g = np.zeros_like(p.data)
            backend.adam_update(p.data, g, self.m[i], self.v[i], self.lr,
                                self.beta1, self.beta2, self.eps, bc1, bc2)
            p._grad = None
