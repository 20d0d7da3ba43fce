"""Adam with bias correction, operating in place on leaf tensors."""

from __future__ import annotations

import numpy as np

from .tensor import ContractError, Tensor


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params: list[Tensor]):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def state_tensors(self):
        """Moment buffers in a stable order, for checkpointing."""
        out = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i:04d}"] = m
            out[f"v{i:04d}"] = v
        return out

    def load_state_tensors(self, tensors: dict, t: int):
        for i in range(len(self.m)):
            self.m[i] = tensors[f"m{i:04d}"].copy()
            self.v[i] = tensors[f"v{i:04d}"].copy()
        self.t = t


def adam_step(
    params: list[Tensor],
    state: AdamState,
    lr: float = 2e-4,
    beta1: float = 0.5,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update; zeroes grads afterward."""
    for p in params:
        if p.grad is None:
            raise ContractError(f"adam_step: parameter {p.name or p.shape} has no grad")
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p.data -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(np.float32)
        p.grad = None
