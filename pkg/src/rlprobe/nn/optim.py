"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, StateError


class AdamState:
    """Per-parameter first/second moment estimates and step count."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [p for _, p in params] if params and isinstance(params[0], tuple) else list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self._scratch = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads=None):
        """One Adam update. Uses ``p.grad`` unless explicit ``grads`` are given."""
        if grads is None:
            grads = []
            for p in self.params:
                if p.grad is None:
                    raise StateError("adam step requires a gradient for every parameter")
                grads.append(p.grad)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v, tmp in zip(self.params, grads, self.m, self.v, self._scratch):
            if g.shape != p.data.shape:
                raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
            g = g.astype(p.data.dtype, copy=False)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - self.beta2
            v += tmp
            np.divide(v, bc2, out=tmp)
            np.sqrt(tmp, out=tmp)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= self.lr / bc1
            p.data -= tmp

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def adam_step(params, grads, state):
    """Functional wrapper: apply one update of ``state`` to ``params`` given ``grads``."""
    if [id(p) for p in state.params] != [id(p) for p in params]:
        raise StateError("adam state was built for different parameters")
    state.step(grads=grads)
    return params
