"""Adam optimizer and exponential learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict,
    grads: dict,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update, in place on the parameter tensors."""
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.value.shape:
            raise ValueError(f"grad shape mismatch for {name!r}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.value)
            v = np.zeros_like(p.value)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + eps)


def exp_decay_lr(lr0: float, decay: float, epoch: int) -> float:
    """lr0 * decay**epoch."""
    if not 0.0 < decay <= 1.0:
        raise ValueError("decay must be in (0, 1]")
    return lr0 * decay**epoch
