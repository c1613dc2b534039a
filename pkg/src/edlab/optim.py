"""Adam with bias correction and deterministic state."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step"]


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    step_count: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    @classmethod
    def init(cls, n_params: int, lr: float) -> "AdamState":
        return cls(lr=lr, m=np.zeros(n_params), v=np.zeros(n_params))


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray):
    """One bias-corrected Adam update; returns (params', state')."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if state.m is None:
        state = AdamState(state.lr, state.beta1, state.beta2, state.eps_hat,
                          0, np.zeros_like(params), np.zeros_like(params))
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError("params/grad/state shape mismatch")
    t = state.step_count + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)
    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps_hat, t, m, v)
    return new_params, new_state
