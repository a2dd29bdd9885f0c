"""Neural mutual-information estimation with exact oracles alongside.

The estimator trains a small statistics network to maximize the
Donsker-Varadhan lower bound I >= E_joint[T] - ln E_marginal[exp T], with
the standard exponential-moving-average correction for the biased gradient
of the log-partition term. Discrete codes enter the network through learned
embeddings so it sees a metric space rather than raw integers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

import ibvq.numcore as nc
from ibvq.errors import (
    ConfigError,
    ShapeError,
    TrainingError,
    ValidationError,
    VocabularyError,
)


@dataclass(frozen=True)
class MineConfig:
    hidden: int = 48
    code_embed_dim: int = 8
    learning_rate: float = 2e-3
    steps: int = 4000
    batch_size: int = 512
    ema_decay: float = 0.99      # gradient bias correction for ln E[exp T]
    eval_every: int = 50
    eval_smoothing: float = 0.9  # smoothing of the full-data bound
    eval_derangements: int = 16  # marginal resamplings per evaluation
    seed: int = 0

    def validate(self) -> None:
        if self.steps < 1 or self.batch_size < 2 or self.hidden < 1:
            raise ConfigError("steps >= 1, batch_size >= 2, hidden >= 1 required")
        if self.eval_derangements < 1:
            raise ConfigError("eval_derangements must be >= 1")
        if not 0.0 <= self.ema_decay < 1.0 or not 0.0 <= self.eval_smoothing < 1.0:
            raise ConfigError("decay factors must lie in [0, 1)")


def dv_bound(t_joint, t_marginal) -> float:
    """mean(T_joint) - ln(mean(exp(T_marginal))), log-sum-exp stabilized."""
    tj = np.asarray(t_joint, dtype=np.float64).reshape(-1)
    tm = np.asarray(t_marginal, dtype=np.float64).reshape(-1)
    if tj.size == 0 or tm.size == 0:
        raise ValidationError("dv_bound needs non-empty statistic sequences")
    return float(tj.mean() - (logsumexp(tm) - np.log(tm.size)))


def shuffle_marginal(xs, zs, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Permute the z column by a seeded derangement-biased shuffle.

    Permutations are redrawn until none of the pairs keeps its partner (up
    to a bounded number of tries), so the result approximates a sample from
    the product of marginals even for small n.
    """
    xs = np.asarray(xs)
    zs = np.asarray(zs)
    if xs.shape[0] != zs.shape[0]:
        raise ShapeError(f"pair counts differ: {xs.shape[0]} vs {zs.shape[0]}")
    n = xs.shape[0]
    if n < 2:
        raise ValidationError("need at least 2 pairs to shuffle a marginal")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    for _ in range(100):
        if not np.any(perm == np.arange(n)):
            break
        perm = rng.permutation(n)
    else:
        perm = np.roll(np.arange(n), 1)
    return xs, zs[perm]


def content_vector(phone_ids, embedding_table: np.ndarray) -> np.ndarray:
    """Mean of the member phones' embeddings; order-free by construction."""
    ids = np.asarray(phone_ids, dtype=np.int64).reshape(-1)
    if ids.size == 0:
        raise ValidationError("content_vector needs a non-empty word")
    table = np.asarray(embedding_table, dtype=np.float64)
    if ids.min() < 0 or ids.max() >= table.shape[0]:
        raise VocabularyError(f"phone id outside embedding table [0, {table.shape[0]})")
    return table[ids].mean(axis=0)


class MineModel:
    """Two-layer statistics network T(x, z) -> scalar."""

    def __init__(self, x_dim: int, z_dim: int, n_symbols: int, cfg: MineConfig):
        cfg.validate()
        self.cfg = cfg
        self.discrete = n_symbols > 0
        self.store = nc.ParamStore()
        rng = np.random.default_rng(cfg.seed)
        z_repr = cfg.code_embed_dim * z_dim if self.discrete else z_dim
        in_dim = x_dim + z_repr
        if self.discrete:
            self.store.add(
                "embed", 0.1 * rng.standard_normal((n_symbols * z_dim, cfg.code_embed_dim))
            )
        self.store.add("w1", nc.glorot_uniform(rng, in_dim, cfg.hidden))
        self.store.add("b1", np.zeros((1, cfg.hidden)))
        self.store.add("w2", nc.glorot_uniform(rng, cfg.hidden, 1))
        self.store.add("b2", np.zeros((1, 1)))
        self.n_symbols = n_symbols
        self.z_dim = z_dim

    def _z_repr(self, z: np.ndarray) -> nc.Tensor:
        if not self.discrete:
            return nc.constant(z)
        parts = []
        for g in range(self.z_dim):
            parts.append(nc.gather_rows(self.store["embed"], g * self.n_symbols + z[:, g]))
        return nc.concat_cols(parts) if len(parts) > 1 else parts[0]

    def statistic(self, x: np.ndarray, z: np.ndarray) -> nc.Tensor:
        h = nc.concat_cols([nc.constant(x), self._z_repr(z)])
        h = nc.relu(nc.affine(h, self.store["w1"], self.store["b1"]))
        return nc.affine(h, self.store["w2"], self.store["b2"])


def _prepare_inputs(xs, zs) -> tuple[np.ndarray, np.ndarray, int]:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    zs = np.asarray(zs)
    if np.issubdtype(zs.dtype, np.integer):
        if zs.ndim == 1:
            zs = zs.reshape(-1, 1)
        n_symbols = int(zs.max()) + 1
        zs = zs.astype(np.int64)
    else:
        n_symbols = 0
        zs = np.asarray(zs, dtype=np.float64)
        if zs.ndim == 1:
            zs = zs.reshape(-1, 1)
    if xs.shape[0] != zs.shape[0]:
        raise ShapeError(f"sample counts differ: {xs.shape[0]} vs {zs.shape[0]}")
    return xs, zs, n_symbols


def mine_estimate(xs, zs, cfg: MineConfig | None = None) -> float:
    """Train the statistics network and return the smoothed final bound.

    Requires at least 100 samples (the estimator is unreliable below). The
    returned value is clamped below at 0 for reporting, since mutual
    information is non-negative.
    """
    cfg = cfg or MineConfig()
    cfg.validate()
    xs, zs, n_symbols = _prepare_inputs(xs, zs)
    n = xs.shape[0]
    if n < 100:
        raise ValidationError(f"mine_estimate needs >= 100 samples, got {n}")
    model = MineModel(xs.shape[1], zs.shape[1], n_symbols, cfg)
    rng = np.random.default_rng(cfg.seed)
    train_cfg = nc.TrainConfig(learning_rate=cfg.learning_rate, seed=cfg.seed, steps=cfg.steps)
    # several independent derangements keep the Monte-Carlo noise of the
    # log-partition term well below the estimator's tolerance
    z_eval_margs = [
        shuffle_marginal(xs, zs, seed=cfg.seed + 1 + r)[1]
        for r in range(cfg.eval_derangements)
    ]
    ema = None
    smoothed = None
    batch = min(cfg.batch_size, n)
    for step in range(cfg.steps):
        idx = rng.choice(n, size=batch, replace=False)
        x_b, z_b = xs[idx], zs[idx]
        z_m = z_b[rng.permutation(batch)]
        t_joint = model.statistic(x_b, z_b)
        t_marg = model.statistic(x_b, z_m)
        exp_marg = nc.exp(t_marg)
        batch_mean_exp = float(exp_marg.data.mean())
        if not np.isfinite(batch_mean_exp):
            raise TrainingError(f"statistics network diverged at step {step}")
        ema = batch_mean_exp if ema is None else (
            cfg.ema_decay * ema + (1.0 - cfg.ema_decay) * batch_mean_exp
        )
        # maximize mean(T_joint) - E[exp T_marg]/ema: same gradient direction
        # as the DV bound but with the debiased log-partition gradient
        loss = nc.sub(nc.mul(nc.mean_all(exp_marg), 1.0 / ema), nc.mean_all(t_joint))
        model.store.zero_grad()
        loss.backward()
        nc.adam_step(model.store, model.store.grads(), train_cfg)
        if (step + 1) % cfg.eval_every == 0 or step == cfg.steps - 1:
            t_marg_all = np.concatenate(
                [model.statistic(xs, zm).data[:, 0] for zm in z_eval_margs]
            )
            bound = dv_bound(model.statistic(xs, zs).data, t_marg_all)
            smoothed = bound if smoothed is None else (
                cfg.eval_smoothing * smoothed + (1.0 - cfg.eval_smoothing) * bound
            )
    return max(float(smoothed), 0.0)
