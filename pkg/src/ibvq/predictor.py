"""Text-to-prosody prediction: word context to discrete prosody codes.

Each word is represented by its own embedding concatenated with its left
and right neighbors, passed through one attention block over the sentence,
and classified by G parallel K-way heads (one per code group). Prediction
is the per-head argmax, ties to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import ibvq.numcore as nc
from ibvq.errors import ConfigError, ShapeError, ValidationError, VocabularyError


@dataclass(frozen=True)
class PredictorConfig:
    word_vocab: int
    K: int
    G: int = 2
    embed_dim: int = 16
    hidden: int = 24
    seed: int = 0

    def validate(self) -> None:
        if self.word_vocab < 1:
            raise ConfigError("word_vocab must be >= 1")
        if self.K < 1:
            raise ConfigError(
                "predictor needs K >= 1; a disabled bottleneck has nothing to predict"
            )
        if self.G < 1 or self.embed_dim < 1 or self.hidden < 1:
            raise ConfigError("G, embed_dim, hidden must all be >= 1")


class PredictorModel:
    def __init__(self, config: PredictorConfig):
        config.validate()
        self.config = config
        self.store = nc.ParamStore()
        rng = np.random.default_rng(config.seed)
        e, h = config.embed_dim, config.hidden
        self.store.add("embed", nc.glorot_uniform(rng, config.word_vocab, e))
        self.store.add("ctx.w", nc.glorot_uniform(rng, 3 * e, h))
        self.store.add("ctx.b", np.zeros((1, h)))
        for name in ("attn.wq", "attn.wk", "attn.wv", "attn.wo"):
            self.store.add(name, nc.glorot_uniform(rng, h, h))
        self.store.add("attn.ln_g", np.ones((1, h)))
        self.store.add("attn.ln_b", np.zeros((1, h)))
        for g in range(config.G):
            self.store.add(f"head{g}.w", nc.glorot_uniform(rng, h, config.K))
            self.store.add(f"head{g}.b", np.zeros((1, config.K)))


def _check_words(word_ids, vocab: int) -> np.ndarray:
    ids = np.asarray(word_ids, dtype=np.int64).reshape(-1)
    if ids.size < 1:
        raise ValidationError("need at least one word")
    if ids.min() < 0 or ids.max() >= vocab:
        raise VocabularyError(
            f"word id outside vocabulary [0, {vocab}): {int(ids.min())}..{int(ids.max())}"
        )
    return ids


def head_logits(word_ids, model: PredictorModel) -> list[nc.Tensor]:
    """Per-group (W, K) logits for one word sequence."""
    ids = _check_words(word_ids, model.config.word_vocab)
    p = model.store
    e = nc.gather_rows(p["embed"], ids)
    # neighbor concatenation: [left, self, right] with zero padding at edges
    h = nc.relu(nc.affine(nc.unfold_rows(e, 3), p["ctx.w"], p["ctx.b"]))
    attended = nc.attention(
        nc.affine(h, p["attn.wq"]), nc.affine(h, p["attn.wk"]), nc.affine(h, p["attn.wv"])
    )
    h = nc.layer_norm(nc.add(h, nc.affine(attended, p["attn.wo"])),
                      p["attn.ln_g"], p["attn.ln_b"])
    return [
        nc.affine(h, p[f"head{g}.w"], p[f"head{g}.b"]) for g in range(model.config.G)
    ]


def predict_codes(word_ids, model: PredictorModel) -> np.ndarray:
    """(W, G) argmax codes; deterministic, ties to the lowest index."""
    logits = head_logits(word_ids, model)
    return np.stack([lg.data.argmax(axis=1) for lg in logits], axis=1)


def _validate_pairs(texts, codes, cfg: PredictorConfig) -> None:
    if len(texts) != len(codes):
        raise ShapeError(f"{len(texts)} texts vs {len(codes)} code blocks")
    if len(texts) == 0:
        raise ValidationError("need at least one sentence")
    for t, c in zip(texts, codes):
        c = np.asarray(c)
        if c.ndim != 2 or c.shape != (len(t), cfg.G):
            raise ShapeError(
                f"codes shaped {c.shape} do not align with a {len(t)}-word sentence"
            )
        if c.size and (c.min() < 0 or c.max() >= cfg.K):
            raise ConfigError(
                f"code value {int(c.max())} outside configured K={cfg.K}"
            )


def train_predictor(
    texts: list,
    codes: list,
    cfg: PredictorConfig,
    train_cfg: nc.TrainConfig | None = None,
) -> PredictorModel:
    """Minimize per-head cross-entropy of codes given word context.

    ``texts`` and ``codes`` are parallel lists: word-id sequences and their
    (W, G) integer code blocks from a trained encoder run.
    """
    cfg.validate()
    _validate_pairs(texts, codes, cfg)
    train_cfg = train_cfg or nc.TrainConfig(learning_rate=5e-3, steps=400, seed=cfg.seed)
    model = PredictorModel(cfg)
    rng = np.random.default_rng(train_cfg.seed)
    n = len(texts)
    order = rng.permutation(n)
    pos = 0
    for _ in range(train_cfg.steps):
        if pos + train_cfg.batch_size > n:
            order = rng.permutation(n)
            pos = 0
        batch = order[pos : pos + min(train_cfg.batch_size, n)]
        pos += train_cfg.batch_size
        total = None
        for i in batch:
            logits = head_logits(texts[i], model)
            arr = np.asarray(codes[i], dtype=np.int64)
            for g in range(cfg.G):
                term = nc.cross_entropy(logits[g], arr[:, g])
                total = term if total is None else nc.add(total, term)
        loss = nc.mul(total, 1.0 / (len(batch) * cfg.G))
        model.store.zero_grad()
        loss.backward()
        nc.adam_step(model.store, model.store.grads(), train_cfg)
    return model


@dataclass
class PredictorReport:
    accuracy: np.ndarray    # (G,) top-1 accuracy per head
    perplexity: np.ndarray  # (G,) exp(mean cross-entropy) per head
    n_words: int


def evaluate_predictor(model: PredictorModel, texts: list, codes: list) -> PredictorReport:
    """Held-out classification quality of the code heads."""
    cfg = model.config
    _validate_pairs(texts, codes, cfg)
    correct = np.zeros(cfg.G)
    nll = np.zeros(cfg.G)
    n_words = 0
    for t, c in zip(texts, codes):
        logits = head_logits(t, model)
        arr = np.asarray(c, dtype=np.int64)
        n_words += len(t)
        for g in range(cfg.G):
            lg = logits[g].data
            correct[g] += np.sum(lg.argmax(axis=1) == arr[:, g])
            shifted = lg - lg.max(axis=1, keepdims=True)
            logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            nll[g] -= logp[np.arange(len(t)), arr[:, g]].sum()
    return PredictorReport(
        accuracy=correct / n_words,
        perplexity=np.exp(nll / n_words),
        n_words=n_words,
    )
