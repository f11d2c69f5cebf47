"""Adam with a linear warmup / linear decay learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ContractError, MissingGradientError
from .nn import ParamGroup


@dataclass
class OptimizerState:
    """Per-tensor Adam moments plus the shared step counter and schedule."""

    total_steps: int
    warmup_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    _m: dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    _v: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.total_steps < 1:
            raise ContractError(f"total_steps must be positive, got {self.total_steps}")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ContractError(f"warmup_fraction must lie in [0, 1], got {self.warmup_fraction}")

    @property
    def warmup_steps(self) -> int:
        return max(1, int(round(self.warmup_fraction * self.total_steps)))


def lr_factor(state: OptimizerState, step: int | None = None) -> float:
    """Schedule multiplier: 0 -> 1 over the warmup, then linearly down to 0."""
    t = state.step_count if step is None else step
    w = state.warmup_steps
    if t < w:
        return t / w
    remaining = max(0, state.total_steps - t)
    return remaining / max(1, state.total_steps - w)


def adam_step(groups: Iterable[ParamGroup], state: OptimizerState) -> float:
    """Apply one scheduled Adam update to every tensor of `groups`.

    Consumed gradients are cleared; tensors outside `groups` are untouched.
    Returns the schedule factor that was applied.
    """
    factor = lr_factor(state)
    t = state.step_count + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for group in groups:
        rate = group.learning_rate * factor
        for name, tensor in group.named_tensors():
            if tensor.grad is None:
                raise MissingGradientError(
                    f"tensor {group.name}/{name} has no gradient; backward was not run for it"
                )
            g = tensor.grad
            key = id(tensor)
            m = state._m.get(key)
            if m is None:
                m = np.zeros_like(tensor.data)
                state._m[key] = m
                state._v[key] = np.zeros_like(tensor.data)
            v = state._v[key]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
            tensor.data -= rate * update
            tensor.grad = None
    state.step_count += 1
    return factor
