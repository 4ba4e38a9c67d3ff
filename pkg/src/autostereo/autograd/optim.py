"""Adam and SGD updates."""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..errors import MissingGrad


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def _grads(params):
    out = []
    for i, p in enumerate(params):
        if p.grad is None:
            raise MissingGrad(f"parameter {i} with shape {p.shape} has no gradient")
        out.append(p.grad)
    return out


def adam_step(params, state: AdamState):
    """One bias-corrected Adam update, in place on ``p.data``."""
    grads = _grads(params)
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    lr_t = state.lr * np.sqrt(c2) / c1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data = (p.data - lr_t * m / (np.sqrt(v) + state.eps * np.sqrt(c2))).astype(p.dtype)


def sgd_step(params, lr):
    for p, g in zip(params, _grads(params)):
        p.data = (p.data - lr * g).astype(p.dtype)


class Adam:
    def __init__(self, params, lr=2e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = float(value)

    def step(self):
        adam_step(self.params, self.state)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
