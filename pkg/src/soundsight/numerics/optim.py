"""AdamW with decoupled weight decay and the warmup/cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError, Tensor


def lr_at(step: int, base_lr: float, warmup_steps: int, total_steps: int) -> float:
    """Linear warmup to base_lr, then cosine decay to 0 at total_steps.

    Decay is base_lr * cos(pi/2 * progress) with progress measured from the
    end of warmup; steps past total_steps stay at 0.
    """
    if step < 0:
        raise ValueError(f"lr_at: negative step {step}")
    if warmup_steps < 0 or total_steps <= 0 or warmup_steps > total_steps:
        raise ValueError(f"lr_at: bad schedule ({warmup_steps=}, {total_steps=})")
    if step <= warmup_steps:
        return base_lr if warmup_steps == 0 else base_lr * step / warmup_steps
    if step >= total_steps:
        # cos(pi/2) rounds to ~6e-17 in double; the schedule ends at exactly 0
        return 0.0
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return base_lr * math.cos(0.5 * math.pi * progress)


@dataclass
class OptimizerState:
    """First/second moment accumulators plus schedule constants."""

    base_lr: float = 2e-4
    warmup_steps: int = 100
    total_steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 1e-5
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr(self) -> float:
        return lr_at(self.t, self.base_lr, self.warmup_steps, self.total_steps)


def adamw_step(params: dict[str, Tensor], state: OptimizerState, lr: float | None = None) -> float:
    """One update over all trainable params; frozen (requires_grad=False) skipped.

    Missing grads count as zero (decay still applies). Any non-finite gradient
    rejects the whole step with parameters untouched. Returns the lr used.
    """
    live = [(k, p) for k, p in params.items() if p.requires_grad]
    for k, p in live:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"adamw_step: non-finite gradient for {k!r}")
    state.t += 1
    step_lr = state.lr() if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for k, p in live:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if k not in state.m:
            state.m[k] = np.zeros_like(p.data)
            state.v[k] = np.zeros_like(p.data)
        m = state.m[k]
        v = state.v[k]
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data -= step_lr * (update + state.weight_decay * p.data)
    return step_lr
