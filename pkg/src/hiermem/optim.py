"""Adam optimizer for tape tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter."""
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adam_step(value: np.ndarray, grad: np.ndarray, state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Apply one bias-corrected Adam update to `value` in place."""
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * (grad * grad)
    mhat = state.m / (1.0 - beta1 ** state.step)
    vhat = state.v / (1.0 - beta2 ** state.step)
    value -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(value.dtype, copy=False)


@dataclass
class Adam:
    """Tracks state for a fixed parameter list; params keep their identity."""
    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: list[AdamState] = field(init=False)

    def __post_init__(self):
        self.states = [AdamState(np.zeros_like(p.data), np.zeros_like(p.data))
                       for p in self.params]

    def step(self) -> None:
        for p, st in zip(self.params, self.states):
            if p.grad is None:
                continue
            adam_step(p.data, p.grad, st, lr=self.lr, beta1=self.beta1,
                      beta2=self.beta2, eps=self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
