"""Adam with global-norm gradient clipping and decoupled weight decay.

Parameters and gradients are flat dicts of float64 arrays keyed by name, so
one implementation serves every trainable model in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Params = dict[str, np.ndarray]


@dataclass
class AdamState:
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Params) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def global_norm(grads: Params) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_by_global_norm(grads: Params, max_norm: float) -> Params:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    learning_rate: float,
    weight_decay: float = 0.0,
    grad_clip_norm: float | None = None,
) -> None:
    """One in-place update. Clipping happens on the global norm before the
    moment update; weight decay is decoupled (applied directly to weights).
    """
    if set(params) != set(grads):
        raise ValueError("parameter/gradient name sets differ")
    for k in params:
        if params[k].shape != grads[k].shape:
            raise ValueError(f"shape mismatch for {k}: {params[k].shape} vs {grads[k].shape}")
    if grad_clip_norm is not None:
        grads = clip_by_global_norm(grads, grad_clip_norm)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for k, p in params.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        if weight_decay:
            p -= learning_rate * weight_decay * p
        p -= learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
