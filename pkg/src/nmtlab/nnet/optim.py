"""Adam with bias correction and pluggable step-size schedules."""

from __future__ import annotations

import numpy as np

from .config import OptimizerHyper


def init_adam_state(params: dict[str, np.ndarray]) -> dict:
    return {
        "m": {name: np.zeros_like(p) for name, p in params.items()},
        "v": {name: np.zeros_like(p) for name, p in params.items()},
    }


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: dict,
    hyper: OptimizerHyper,
    t: int,
    d_model: int | None = None,
) -> tuple[dict[str, np.ndarray], dict]:
    """One Adam update at step t (1-based); params and state update in place."""
    if t < 1:
        raise ValueError("adam step count is 1-based")
    lr = hyper.learning_rate(t, d_model)
    b1, b2, eps = hyper.beta1, hyper.beta2, hyper.epsilon
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch for {name}: {p.shape} vs {g.shape}")
        m = state["m"][name]
        v = state["v"][name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def schedule_preview(hyper: OptimizerHyper, steps: int, d_model: int | None = None) -> list[float]:
    """Learning rates for steps 1..steps, handy for sanity plots."""
    return [hyper.learning_rate(t, d_model) for t in range(1, steps + 1)]
