"""Central-difference verification of autodiff gradients.

``loss_fn`` must be deterministic across calls (no fresh dropout draws)
and should be run in 64-bit parameters; float32 rounding produces false
failures at the tolerances used here.
"""

from __future__ import annotations

import numpy as np

from .rng import RngState
from .tensor import Tape, Tensor


def grad_check(
    loss_fn,
    params: dict[str, Tensor],
    epsilon: float = 1e-5,
    coord_limit: int = 200,
    rng: RngState | None = None,
) -> float:
    """Return the max relative error between autodiff and finite differences.

    Every coordinate of every parameter is probed; parameters larger than
    ``coord_limit`` are subsampled down to ``coord_limit`` coordinates
    (seeded through ``rng`` so runs are reproducible). Relative error is
    |a - n| / max(1, |a| + |n|).
    """
    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    grads = {k: p.grad.copy() for k, p in params.items()}

    if rng is None:
        rng = RngState(0)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        gflat = grads[name].reshape(-1)
        n = flat.size
        if n > coord_limit:
            coords = rng.choice(n, size=coord_limit, replace=False)
        else:
            coords = np.arange(n)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn().item()
            flat[i] = orig - epsilon
            down = loss_fn().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            analytic = gflat[i]
            denom = max(1.0, abs(analytic) + abs(numeric))
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst
