"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .models import Batch, seq2seq_forward
from .tensor import Tensor

REL_FLOOR = 1e-8


def grad_check_fn(
    loss_fn: Callable[[dict[str, Tensor]], Tensor],
    params: dict[str, Tensor],
    step_size: float = 1e-3,
    n_coords: int = 256,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    A deterministic subsample of at least ``n_coords`` coordinates (all of
    them if the model is smaller) is probed; the loss function must be
    deterministic, so run it without dropout.  The default step keeps the
    f64 cancellation noise of (L+ - L-) well under the relative-error floor
    even for coordinates whose true gradient is below that floor.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn(params)
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    names = list(params.keys())
    sizes = [params[n].data.size for n in names]
    offsets = np.cumsum([0] + sizes)
    total = int(offsets[-1])
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    k = min(total, max(n_coords, 200))
    coords = np.sort(rng.choice(total, size=k, replace=False))

    worst = 0.0
    for coord in coords:
        which = int(np.searchsorted(offsets, coord, side="right")) - 1
        name = names[which]
        flat_idx = int(coord - offsets[which])
        flat = params[name].data.reshape(-1)
        keep = flat[flat_idx]

        flat[flat_idx] = keep + step_size
        up = float(loss_fn(params).data)
        flat[flat_idx] = keep - step_size
        down = float(loss_fn(params).data)
        flat[flat_idx] = keep

        numeric = (up - down) / (2.0 * step_size)
        a = float(analytic[name].reshape(-1)[flat_idx])
        err = abs(a - numeric) / max(abs(a), abs(numeric), REL_FLOOR)
        worst = max(worst, err)
    return worst


def grad_check(
    config,
    params: dict[str, Tensor],
    batch: Batch,
    step_size: Optional[float] = None,
    n_coords: int = 256,
    seed: int = 0,
) -> float:
    """Gradient check for a seq2seq model on one batch (dropout disabled).

    Default steps are per architecture: the saturating LSTM needs a large
    step to beat cancellation noise on its near-zero-gradient coordinates,
    while the transformer's sharper curvature wants a small one.
    """
    if step_size is None:
        step_size = 1e-3 if config.arch == "lstm" else 1e-4

    def loss_fn(p):
        _, loss = seq2seq_forward(config, p, batch, rng=None, training=False)
        return loss

    return grad_check_fn(loss_fn, params, step_size=step_size, n_coords=n_coords, seed=seed)
