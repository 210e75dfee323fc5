"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamWState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamWState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
            0,
        )


def adamw_step(params, grads, state, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
               weight_decay=0.01, step_index=None):
    """One AdamW update; returns ``(new_params, new_state)``.

    ``theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)``
    with bias-corrected moments. Inputs are not modified.
    """
    t = state.step + 1 if step_index is None else int(step_index)
    if t < 1:
        raise ValueError("step_index starts at 1")
    b1, b2 = betas
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {theta.shape}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        new_params[name] = theta - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * theta)
        new_m[name], new_v[name] = m, v
    return new_params, AdamWState(new_m, new_v, t)
