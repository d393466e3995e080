"""Adaptive optimizer with decoupled weight decay and the warmup-cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError, ShapeError
from .tensor import Tensor


@dataclass
class OptimizerState:
    """Per-parameter first/second moment accumulators plus the step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class AdamW:
    """Bias-corrected adaptive update; weight decay is applied multiplicatively,
    independent of the gradient term."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = dict(params)
        self.state = OptimizerState(beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)
        for name, p in self.params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float) -> None:
        if lr <= 0.0:
            raise InputError("learning rate must be positive")
        st = self.state
        st.step_count += 1
        bc1 = 1.0 - st.beta1 ** st.step_count
        bc2 = 1.0 - st.beta2 ** st.step_count
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match parameter '{name}' {p.data.shape}")
            m = st.m[name]
            v = st.v[name]
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * g * g
            if st.weight_decay:
                p.data *= 1.0 - lr * st.weight_decay
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + st.eps)


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup from 0 to max_lr, then cosine decay to min_lr."""

    max_lr: float
    min_lr: float = 1e-8
    warmup_iters: int = 0
    total_iters: int = 1

    def __post_init__(self):
        if self.max_lr < 0 or self.min_lr < 0 or self.min_lr > self.max_lr:
            raise InputError("need 0 <= min_lr <= max_lr")
        if not 0 <= self.warmup_iters <= self.total_iters:
            raise InputError("need 0 <= warmup_iters <= total_iters")


def lr_at(schedule: LrSchedule, iteration: int) -> float:
    if not 0 <= iteration <= schedule.total_iters:
        raise InputError(f"iteration {iteration} outside [0, {schedule.total_iters}]")
    if iteration < schedule.warmup_iters:
        return schedule.max_lr * iteration / schedule.warmup_iters
    if iteration >= schedule.total_iters:
        return schedule.min_lr
    progress = (iteration - schedule.warmup_iters) / (schedule.total_iters - schedule.warmup_iters)
    return schedule.min_lr + 0.5 * (schedule.max_lr - schedule.min_lr) * (1.0 + math.cos(math.pi * progress))
