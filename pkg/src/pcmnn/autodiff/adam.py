"""Bias-corrected Adam over a flat parameter vector."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    n_params: int
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray = field(default=None, repr=False)
    second_moment: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.first_moment is None:
            self.first_moment = np.zeros(self.n_params)
        if self.second_moment is None:
            self.second_moment = np.zeros(self.n_params)
        if self.step_count < 0:
            raise ValueError("step_count must be nonnegative")


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, label: str = "loss") -> np.ndarray:
    """Update ``params`` in place and return it.

    ``label`` names the loss term in the error raised for non-finite
    gradients.
    """
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, "
                         f"state {state.first_moment.shape}")
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NonFiniteGradient(f"non-finite gradient of {label} at parameter {bad} "
                                f"(step {state.step_count + 1})")
    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    m *= state.beta1
    m += (1.0 - state.beta1) * grads
    v *= state.beta2
    v += (1.0 - state.beta2) * (grads * grads)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    params -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params
