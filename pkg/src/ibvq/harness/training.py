"""Joint autoencoder training, duration-head training, and checkpointing."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import ibvq.numcore as nc
from ibvq.decoder import (
    AutoencoderModels,
    DecoderConfig,
    DecoderModel,
    duration_logits,
    encode_text,
    predict_durations,
    reconstruction_graph,
)
from ibvq.encoder import EncoderConfig, EncoderModel, encode
from ibvq.errors import CheckpointError, ConfigError, TrainingError
from ibvq.quantizer import (
    CapacityConfig,
    Codebook,
    init_codebook_from_features,
    quantize_batch,
    usage_stats,
)
from ibvq.synthdata.types import Corpus, Utterance


@dataclass(frozen=True)
class LossPoint:
    step: int
    mse: float
    codebook: float
    commitment: float

    @property
    def total(self) -> float:
        return self.mse + self.codebook + self.commitment


@dataclass
class TrainedAutoencoder:
    models: AutoencoderModels
    loss_curve: list[LossPoint]
    usage: "np.ndarray | None"  # (G,) final code perplexity per group


def split_corpus(corpus: Corpus, holdout_fraction: float = 0.1) -> tuple[list[int], list[int]]:
    """Fixed train/holdout utterance split derived from the corpus seed."""
    n = len(corpus.utterances)
    rng = np.random.default_rng(corpus.config.seed + 9999)
    order = rng.permutation(n)
    n_hold = max(1, int(round(n * holdout_fraction))) if n > 1 else 0
    heldout = sorted(order[:n_hold].tolist())
    train = sorted(order[n_hold:].tolist())
    return train, heldout


class _BatchSampler:
    """Deterministic epoch-reshuffling batch iterator."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch = min(batch_size, n)
        self.rng = rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos + self.batch > self.n:
            self.order = self.rng.permutation(self.n)
            self.pos = 0
        out = self.order[self.pos : self.pos + self.batch]
        self.pos += self.batch
        return out


def train_autoencoder(
    corpus: Corpus,
    cap_cfg: CapacityConfig,
    train_cfg: nc.TrainConfig,
    train_indices: list[int] | None = None,
    enc_cfg: EncoderConfig | None = None,
    dec_cfg: DecoderConfig | None = None,
    warmup_steps: int = 100,
    reseed_every: int = 50,
) -> TrainedAutoencoder:
    """Train encoder, codebook, and decoder jointly on reconstruction.

    The total loss at every step is mean reconstruction MSE plus the
    codebook and commitment terms; all three are logged separately. The
    bottleneck's capacity term is a constant (it depends only on K and G),
    so it never enters the gradient. Deterministic under the seed.

    For the first ``warmup_steps`` the quantizer is bypassed so the encoder
    settles before its outputs seed the codebook (k-means++); afterwards,
    entries that received no assignments since the last check are reseeded
    from live word features every ``reseed_every`` steps. Both guards exist
    to keep codebook usage from collapsing onto a few entries.
    """
    utts = corpus.utterances
    if train_indices is not None:
        utts = [corpus.utterances[i] for i in train_indices]
    if not utts:
        raise ConfigError("no utterances to train on")
    channels = corpus.config.channels
    enc_cfg = enc_cfg or EncoderConfig(channels=channels, groups=cap_cfg.G, seed=train_cfg.seed)
    if enc_cfg.groups != cap_cfg.G:
        raise ConfigError("encoder group count must match the bottleneck's G")
    dec_cfg = dec_cfg or DecoderConfig(
        n_phones=corpus.inventory.size,
        channels=channels,
        prosody_dim=enc_cfg.acoustic_dim,
        seed=train_cfg.seed + 1,
    )
    enc = EncoderModel(enc_cfg)
    dec = DecoderModel(dec_cfg)

    rng = np.random.default_rng(train_cfg.seed)
    sampler = _BatchSampler(len(utts), train_cfg.batch_size, rng)

    warmup = min(warmup_steps, max(train_cfg.steps - 1, 0)) if cap_cfg.enabled else 0
    cb_store = nc.ParamStore()
    codebook_param = None
    assign_counts = np.zeros(cap_cfg.K, dtype=np.int64) if cap_cfg.enabled else None

    def seed_codebook() -> nc.Tensor:
        seed_idx = rng.permutation(len(utts))[: max(train_cfg.batch_size, 64)]
        seed_feats = np.vstack(
            [encode(utts[i].features, utts[i].alignment, enc).data for i in seed_idx]
        )
        cb0 = init_codebook_from_features(seed_feats, cap_cfg, seed=train_cfg.seed)
        return cb_store.add("entries", cb0.entries)

    stores = [enc.store, dec.store, cb_store]
    curve: list[LossPoint] = []
    for step in range(train_cfg.steps):
        # cosine decay to 10% of the base rate sharpens late convergence
        frac = step / max(train_cfg.steps - 1, 1)
        lr = train_cfg.learning_rate * (0.1 + 0.45 * (1.0 + math.cos(math.pi * frac)))
        step_cfg = dataclasses.replace(train_cfg, learning_rate=lr)
        if cap_cfg.enabled and codebook_param is None and step >= warmup:
            codebook_param = seed_codebook()
        batch = sampler.next()
        bypass = codebook_param is None
        batch_word_feats = []
        mse_sum = cb_sum = commit_sum = None
        for i in batch:
            utt = utts[i]
            graph = reconstruction_graph(
                utt.features, utt.alignment, utt.spec.phone_ids,
                enc, codebook_param, cap_cfg, dec,
                commitment_cost=train_cfg.commitment_cost,
                bypass_quantizer=bypass,
            )
            if graph.bottleneck.codes is not None:
                assign_counts += np.bincount(
                    graph.bottleneck.codes.reshape(-1), minlength=cap_cfg.K
                )
            batch_word_feats.append(graph.word_features.data)
            m = nc.mse(graph.output, utt.features)
            mse_sum = m if mse_sum is None else nc.add(mse_sum, m)
            cb_sum = graph.bottleneck.codebook_loss if cb_sum is None else nc.add(
                cb_sum, graph.bottleneck.codebook_loss
            )
            commit_sum = graph.bottleneck.commitment_loss if commit_sum is None else nc.add(
                commit_sum, graph.bottleneck.commitment_loss
            )
        scale = 1.0 / len(batch)
        total = nc.mul(nc.add(nc.add(mse_sum, cb_sum), commit_sum), scale)
        point = LossPoint(
            step=step,
            mse=mse_sum.item() * scale,
            codebook=cb_sum.item() * scale,
            commitment=commit_sum.item() * scale,
        )
        if not np.isfinite(point.total):
            raise TrainingError(f"loss diverged (non-finite) at step {step}")
        curve.append(point)
        for store in stores:
            store.zero_grad()
        total.backward()
        for store in stores:
            nc.adam_step(store, store.grads(), step_cfg)
        if (
            codebook_param is not None
            and reseed_every > 0
            and (step + 1 - warmup) % reseed_every == 0
        ):
            dead = assign_counts == 0
            if dead.any():
                pool = np.vstack(batch_word_feats).reshape(-1, codebook_param.cols)
                pick = rng.integers(0, pool.shape[0], size=int(dead.sum()))
                codebook_param.data[dead] = pool[pick] + rng.normal(
                    0.0, 1e-3, size=(int(dead.sum()), codebook_param.cols)
                )
            assign_counts[:] = 0

    codebook = None
    usage = None
    if cap_cfg.enabled:
        if codebook_param is None:  # steps == 0: still produce a usable bundle
            codebook_param = seed_codebook()
        codebook = Codebook(entries=codebook_param.data.copy(), groups=cap_cfg.G)
        all_feats = np.vstack([encode(u.features, u.alignment, enc).data for u in utts])
        codes, _, _ = quantize_batch(all_feats, codebook)
        usage = usage_stats(codes, cap_cfg).perplexity
    models = AutoencoderModels(encoder=enc, decoder=dec, cap_cfg=cap_cfg, codebook=codebook)
    return TrainedAutoencoder(models=models, loss_curve=curve, usage=usage)


def train_duration_head(
    corpus: Corpus,
    dec: DecoderModel,
    train_cfg: nc.TrainConfig,
    train_indices: list[int] | None = None,
) -> list[float]:
    """Fit only the duration-head parameters against log ground-truth
    durations (the text encoder is left as trained)."""
    utts = corpus.utterances
    if train_indices is not None:
        utts = [corpus.utterances[i] for i in train_indices]
    rng = np.random.default_rng(train_cfg.seed)
    sampler = _BatchSampler(len(utts), train_cfg.batch_size, rng)
    dur_names = set(dec.duration_parameter_names())
    curve = []
    for step in range(train_cfg.steps):
        batch = sampler.next()
        total = None
        for i in batch:
            utt = utts[i]
            feats = encode_text(utt.spec.phone_ids, dec)
            raw = duration_logits(feats, dec)
            target = np.log(np.diff(utt.alignment.phone_edges).astype(np.float64))
            term = nc.mse(raw, target.reshape(-1, 1))
            total = term if total is None else nc.add(total, term)
        loss = nc.mul(total, 1.0 / len(batch))
        if not np.isfinite(loss.item()):
            raise TrainingError(f"duration loss diverged at step {step}")
        curve.append(loss.item() / 1.0)
        dec.store.zero_grad()
        loss.backward()
        grads = {k: v for k, v in dec.store.grads().items() if k in dur_names}
        nc.adam_step(dec.store, grads, train_cfg)
    return curve


def duration_mae(corpus: Corpus, dec: DecoderModel, indices: list[int]) -> float:
    """Mean absolute error in frames of predicted vs true durations."""
    errors = []
    for i in indices:
        utt = corpus.utterances[i]
        feats = encode_text(utt.spec.phone_ids, dec)
        pred = predict_durations(feats, dec)
        true = np.diff(utt.alignment.phone_edges)
        errors.extend(np.abs(pred - true).tolist())
    return float(np.mean(errors))


# ---------------------------------------------------------------------------
# model bundle checkpointing
# ---------------------------------------------------------------------------

_META_NAME = "meta.json"
_PARAMS_NAME = "params.ibvq"


def save_models(path: str | Path, models: AutoencoderModels) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    merged = {f"enc.{k}": v for k, v in models.encoder.store.export().items()}
    merged.update({f"dec.{k}": v for k, v in models.decoder.store.export().items()})
    if models.codebook is not None:
        merged["cb.entries"] = models.codebook.entries.copy()
    nc.save_params(root / _PARAMS_NAME, merged)
    meta = {
        "encoder": dataclasses.asdict(models.encoder.config),
        "decoder": dataclasses.asdict(models.decoder.config),
        "capacity": {"K": models.cap_cfg.K, "G": models.cap_cfg.G},
    }
    (root / _META_NAME).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def load_models(path: str | Path) -> AutoencoderModels:
    root = Path(path)
    try:
        meta = json.loads((root / _META_NAME).read_text())
    except OSError as e:
        raise CheckpointError(f"missing model metadata in {root}: {e}") from e
    except json.JSONDecodeError as e:
        raise CheckpointError(f"malformed model metadata in {root}: {e}") from e
    try:
        enc = EncoderModel(EncoderConfig(**meta["encoder"]))
        dec = DecoderModel(DecoderConfig(**meta["decoder"]))
        cap_cfg = CapacityConfig(**meta["capacity"])
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"incomplete model metadata in {root}: {e}") from e
    params = nc.load_params(root / _PARAMS_NAME)
    enc.store.load({k[4:]: v for k, v in params.items() if k.startswith("enc.")})
    dec.store.load({k[4:]: v for k, v in params.items() if k.startswith("dec.")})
    codebook = None
    if cap_cfg.enabled:
        if "cb.entries" not in params:
            raise CheckpointError(f"checkpoint {root} lacks codebook entries for K>0")
        codebook = Codebook(entries=params["cb.entries"], groups=cap_cfg.G)
    return AutoencoderModels(encoder=enc, decoder=dec, cap_cfg=cap_cfg, codebook=codebook)
