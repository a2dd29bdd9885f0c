"""Finite-difference validation of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from ibvq.errors import ConfigError
from ibvq.numcore.tensor import Array, Tensor, tensor

# Components whose analytic and numeric gradients are both below this scale
# are compared absolutely rather than relatively. Central differences on an
# O(1) loss carry ~1e-10 of truncation plus ~1e-11 of round-off at eps=1e-5,
# which would dominate a pure ratio for vanishing gradients; the floor keeps
# the implied absolute tolerance (tol * floor ~ 1e-8) well above that noise.
_REL_FLOOR = 1e-4


def grad_check(
    f: Callable[[dict[str, Tensor]], Tensor],
    point: Mapping[str, Array] | Array,
    eps: float = 1e-5,
) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    ``f`` maps a dict of named tensors to a 1x1 scalar tensor. ``point`` is
    either a dict of arrays or a single array (then named "x"). Every
    component of every input is perturbed by +-eps.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    if isinstance(point, np.ndarray) or not isinstance(point, Mapping):
        point = {"x": np.asarray(point, dtype=np.float64)}
    arrays = {k: np.atleast_2d(np.asarray(v, dtype=np.float64)) for k, v in point.items()}

    leaves = {k: tensor(v, requires_grad=True) for k, v in arrays.items()}
    out = f(leaves)
    out.backward()
    analytic = {
        k: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for k, t in leaves.items()
    }

    def eval_at(values: dict[str, Array]) -> float:
        frozen = {k: tensor(v, requires_grad=False) for k, v in values.items()}
        return f(frozen).item()

    worst = 0.0
    for name, base in arrays.items():
        for idx in np.ndindex(*base.shape):
            bumped = {k: v.copy() for k, v in arrays.items()}
            bumped[name][idx] += eps
            up = eval_at(bumped)
            bumped[name][idx] -= 2 * eps
            down = eval_at(bumped)
            fd = (up - down) / (2 * eps)
            a = analytic[name][idx]
            denom = max(abs(a), abs(fd), _REL_FLOOR)
            worst = max(worst, abs(a - fd) / denom)
    return worst
