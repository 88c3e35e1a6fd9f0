"""Central-difference gradient checking for tape-built losses."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NumericError
from .optim import Parameter
from .tensor import Tensor, backward, no_grad


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: list[Parameter],
    eps: float = 1e-5,
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Compare analytic and central-difference gradients per parameter.

    loss_fn must rebuild the forward pass from current parameter values on
    every call and be deterministic.  Returns the max relative error per
    parameter name, with relative error |a - n| / max(|a|, |n|, 1e-8).
    When a parameter has more coordinates than max_coords_per_param, a
    random subset is checked.
    """
    for p in params:
        if p.tensor.grad is not None:
            p.tensor.grad[...] = 0.0
    loss = loss_fn()
    if not np.all(np.isfinite(loss.values)):
        raise NumericError("loss_fn returned a non-finite loss")
    backward(loss)
    analytic = {p.name: p.tensor.grad.copy() for p in params if not p.frozen}

    if rng is None:
        rng = np.random.default_rng(0)
    worst: dict[str, float] = {}
    for p in params:
        if p.frozen:
            continue
        flat = p.tensor.values.reshape(-1)
        a_flat = analytic[p.name].reshape(-1)
        n_coords = flat.size
        if max_coords_per_param is not None and n_coords > max_coords_per_param:
            coords = rng.choice(n_coords, size=max_coords_per_param, replace=False)
        else:
            coords = np.arange(n_coords)
        err = 0.0
        for i in coords:
            keep = flat[i]
            flat[i] = keep + eps
            with no_grad():
                up = float(loss_fn().values)
            flat[i] = keep - eps
            with no_grad():
                down = float(loss_fn().values)
            flat[i] = keep
            numeric = (up - down) / (2.0 * eps)
            a = float(a_flat[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            err = max(err, rel)
        worst[p.name] = err
    return worst
