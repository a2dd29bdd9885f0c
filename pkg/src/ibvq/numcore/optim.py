"""Named parameter storage and the adaptive-moment optimizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ibvq.errors import ConfigError, NumericError, ShapeError
from ibvq.numcore.tensor import Array, Tensor, tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by the training loops.

    ``kl_weight`` is kept for completeness but is inert under the quantized
    bottleneck, whose capacity term is a constant independent of the
    parameters; it multiplies nothing in the loss.
    """

    learning_rate: float = 3e-3
    steps: int = 1200
    seed: int = 0
    batch_size: int = 8
    kl_weight: float = 1.0
    commitment_cost: float = 0.25

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.kl_weight < 0:
            raise ConfigError(f"kl_weight must be >= 0, got {self.kl_weight}")
        if self.commitment_cost < 0:
            raise ConfigError(
                f"commitment_cost must be >= 0, got {self.commitment_cost}"
            )


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> Array:
    """Seeded uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


class ParamStore:
    """Named parameter matrices plus per-parameter optimizer state."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self._m: dict[str, Array] = {}
        self._v: dict[str, Array] = {}
        self._step: dict[str, int] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self.params:
            raise ConfigError(f"parameter {name!r} already registered")
        p = tensor(data, requires_grad=True)
        self.params[name] = p
        self._m[name] = np.zeros_like(p.data)
        self._v[name] = np.zeros_like(p.data)
        self._step[name] = 0
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def step_count(self, name: str) -> int:
        return self._step[name]

    def grads(self) -> dict[str, Array]:
        """Collect accumulated gradients, treating missing ones as zero."""
        out = {}
        for name, p in self.params.items():
            out[name] = p.grad if p.grad is not None else np.zeros_like(p.data)
        return out

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def export(self) -> dict[str, Array]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load(self, arrays: dict[str, Array]) -> None:
        for name, arr in arrays.items():
            if name not in self.params:
                raise ConfigError(f"unknown parameter {name!r} in checkpoint")
            p = self.params[name]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeError(
                    f"parameter {name!r} shape {arr.shape} != expected {p.data.shape}"
                )
            p.data = arr.copy()


def adam_step(store: ParamStore, grads: dict[str, Array], cfg: TrainConfig) -> ParamStore:
    """One adaptive-moment update with bias correction, in place.

    Deterministic: parameters are visited in sorted name order. A non-finite
    gradient raises NumericError naming the offending parameter.
    """
    for name in sorted(grads):
        if name not in store.params:
            raise ConfigError(f"gradient for unknown parameter {name!r}")
        p = store.params[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} != parameter {name!r} shape {p.data.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        t = store._step[name] + 1
        store._step[name] = t
        m = store._m[name]
        v = store._v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        p.data -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return store
