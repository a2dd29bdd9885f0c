"""Conditional decoder: phone content plus word-level prosody vectors back
to a feature sequence, with length regulation and duration prediction.

The pipeline mirrors a non-autoregressive synthesis stack: a text encoder
produces phone-level features, the per-word prosody vector is broadcast to
its phones and concatenated, a length regulator repeats phone rows by their
frame durations, and a convolutional decoder emits the output channels.
Ground-truth durations drive reconstruction and transfer; the duration
predictor is exercised by its own pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import ibvq.numcore as nc
from ibvq.encoder import EncoderModel, encode
from ibvq.errors import (
    AlignmentError,
    ConfigError,
    ShapeError,
    ValidationError,
    VocabularyError,
)
from ibvq.quantizer import (
    BottleneckOutput,
    CapacityConfig,
    Codebook,
    apply_bottleneck,
    lookup,
    quantize_batch,
)
from ibvq.synthdata.types import AlignmentHierarchy, round_half_up


@dataclass(frozen=True)
class DecoderConfig:
    n_phones: int
    channels: int = 16
    phone_dim: int = 16
    prosody_dim: int = 8
    hidden: int = 24
    duration_hidden: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.n_phones < 1:
            raise ConfigError("n_phones must be >= 1")
        for name in ("channels", "phone_dim", "prosody_dim", "hidden", "duration_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


class DecoderModel:
    def __init__(self, config: DecoderConfig):
        config.validate()
        self.config = config
        self.store = nc.ParamStore()
        rng = np.random.default_rng(config.seed)
        e, h, c = config.phone_dim, config.hidden, config.channels
        d, dh = config.prosody_dim, config.duration_hidden
        self.store.add("embed", nc.glorot_uniform(rng, config.n_phones, e))
        for name in ("tenc.wq", "tenc.wk", "tenc.wv"):
            self.store.add(name, nc.glorot_uniform(rng, e, e))
        # residual-branch outputs start small (near-identity stream)
        self.store.add("tenc.wo", 0.1 * nc.glorot_uniform(rng, e, e))
        self.store.add("tenc.ln1_g", np.ones((1, e)))
        self.store.add("tenc.ln1_b", np.zeros((1, e)))
        self.store.add("tenc.conv.k", 0.1 * nc.glorot_uniform(rng, 3 * e, e))
        self.store.add("tenc.conv.b", np.zeros((1, e)))
        self.store.add("tenc.ln2_g", np.ones((1, e)))
        self.store.add("tenc.ln2_b", np.zeros((1, e)))
        self.store.add("fuse.w", nc.glorot_uniform(rng, e + d, h))
        self.store.add("fuse.b", np.zeros((1, h)))
        self.store.add("sdec.conv1.k", 0.1 * nc.glorot_uniform(rng, 5 * h, h))
        self.store.add("sdec.conv1.b", np.zeros((1, h)))
        self.store.add("sdec.conv2.k", 0.1 * nc.glorot_uniform(rng, 3 * h, h))
        self.store.add("sdec.conv2.b", np.zeros((1, h)))
        self.store.add("sdec.out.w", nc.glorot_uniform(rng, h, c))
        self.store.add("sdec.out.b", np.zeros((1, c)))
        # linear shortcut from the fused inputs to the output channels; the
        # conv stack then only has to model what content + prosody cannot
        # reach linearly
        self.store.add("sdec.skip.w", nc.glorot_uniform(rng, e + d, c))
        self.store.add("dur.conv1.k", nc.glorot_uniform(rng, 3 * e, dh))
        self.store.add("dur.conv1.b", np.zeros((1, dh)))
        self.store.add("dur.conv2.k", nc.glorot_uniform(rng, 3 * dh, dh))
        self.store.add("dur.conv2.b", np.zeros((1, dh)))
        self.store.add("dur.out.w", nc.glorot_uniform(rng, dh, 1))
        self.store.add("dur.out.b", np.zeros((1, 1)))
        self._pe: dict[int, np.ndarray] = {}

    def positional(self, length: int, dim: int) -> np.ndarray:
        table = self._pe.get(dim)
        if table is None or table.shape[0] < length:
            table = nc.sinusoid_table(max(length, 256), dim)
            self._pe[dim] = table
        return table[:length]

    def duration_parameter_names(self) -> list[str]:
        return [n for n in self.store.names() if n.startswith("dur.")]


def encode_text(phone_ids, model: DecoderModel) -> nc.Tensor:
    """Phone ids to (P, phone_dim) phone-level features."""
    ids = np.asarray(phone_ids, dtype=np.int64).reshape(-1)
    if ids.size < 1:
        raise ValidationError("encode_text needs at least one phone")
    if ids.min() < 0 or ids.max() >= model.config.n_phones:
        raise VocabularyError(
            f"phone id outside inventory [0, {model.config.n_phones}): "
            f"{int(ids.min())}..{int(ids.max())}"
        )
    p = model.store
    h = nc.add(nc.gather_rows(p["embed"], ids),
               nc.constant(model.positional(ids.size, model.config.phone_dim)))
    normed = nc.layer_norm(h, p["tenc.ln1_g"], p["tenc.ln1_b"])
    attended = nc.attention(
        nc.affine(normed, p["tenc.wq"]),
        nc.affine(normed, p["tenc.wk"]),
        nc.affine(normed, p["tenc.wv"]),
    )
    h = nc.add(h, nc.affine(attended, p["tenc.wo"]))
    normed = nc.layer_norm(h, p["tenc.ln2_g"], p["tenc.ln2_b"])
    conv = nc.relu(nc.conv1d(normed, p["tenc.conv.k"], p["tenc.conv.b"], width=3))
    return nc.add(h, conv)


def broadcast_prosody(word_vectors: nc.Tensor, phones_per_word, phone_feats: nc.Tensor) -> nc.Tensor:
    """Append each word's prosody vector to all of its phone rows."""
    counts = np.asarray(phones_per_word, dtype=np.int64).reshape(-1)
    if counts.size != word_vectors.rows:
        raise AlignmentError(
            f"{counts.size} word phone-counts for {word_vectors.rows} word vectors"
        )
    if counts.sum() != phone_feats.rows:
        raise AlignmentError(
            f"word phone-counts sum to {int(counts.sum())}, but there are "
            f"{phone_feats.rows} phone rows"
        )
    return nc.concat_cols([phone_feats, nc.repeat_rows(word_vectors, counts)])


def length_regulate(phone_feats: nc.Tensor, durations) -> nc.Tensor:
    """Repeat phone row i durations[i] times; output length is sum(durations)."""
    durations = np.asarray(durations, dtype=np.int64).reshape(-1)
    if np.any(durations < 1):
        raise ValidationError("durations must all be >= 1 frames")
    return nc.repeat_rows(phone_feats, durations)


def decode_frames(frame_feats: nc.Tensor, model: DecoderModel) -> nc.Tensor:
    """Frame-level fused features (T, phone_dim + prosody_dim) to (T, C)."""
    cfg = model.config
    expected = cfg.phone_dim + cfg.prosody_dim
    if frame_feats.cols != expected:
        raise ShapeError(f"frame features have {frame_feats.cols} dims, expected {expected}")
    p = model.store
    h = nc.relu(nc.affine(frame_feats, p["fuse.w"], p["fuse.b"]))
    h = nc.add(h, nc.constant(model.positional(h.rows, cfg.hidden)))
    h = nc.add(h, nc.relu(nc.conv1d(h, p["sdec.conv1.k"], p["sdec.conv1.b"], width=5)))
    h = nc.add(h, nc.relu(nc.conv1d(h, p["sdec.conv2.k"], p["sdec.conv2.b"], width=3)))
    deep = nc.affine(h, p["sdec.out.w"], p["sdec.out.b"])
    return nc.add(deep, nc.matmul(frame_feats, p["sdec.skip.w"]))


def duration_logits(phone_feats: nc.Tensor, model: DecoderModel) -> nc.Tensor:
    """(P, 1) raw log-duration outputs of the duration head."""
    p = model.store
    h = nc.relu(nc.conv1d(phone_feats, p["dur.conv1.k"], p["dur.conv1.b"], width=3))
    h = nc.relu(nc.conv1d(h, p["dur.conv2.k"], p["dur.conv2.b"], width=3))
    return nc.affine(h, p["dur.out.w"], p["dur.out.b"])


def predict_durations(phone_feats: nc.Tensor, model: DecoderModel) -> np.ndarray:
    """Per-phone frame counts: round(exp(raw)), clamped to >= 1."""
    raw = duration_logits(phone_feats, model).data[:, 0]
    frames = np.exp(np.clip(raw, -25.0, 25.0))
    return np.maximum(np.vectorize(round_half_up)(frames), 1).astype(np.int64)


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------


@dataclass
class AutoencoderModels:
    """A trained triple: reference encoder, bottleneck codebook, decoder."""

    encoder: EncoderModel
    decoder: DecoderModel
    cap_cfg: CapacityConfig
    codebook: Codebook | None  # None iff the bottleneck is disabled

    def __post_init__(self):
        if self.cap_cfg.enabled and self.codebook is None:
            raise ConfigError("enabled bottleneck requires a codebook")


def prosody_codes(features, align: AlignmentHierarchy, models: AutoencoderModels) -> np.ndarray | None:
    """Discrete codes (W, G) for one utterance; None when the bottleneck is off."""
    if not models.cap_cfg.enabled:
        return None
    word_feats = encode(features, align, models.encoder)
    codes, _, _ = quantize_batch(word_feats.data, models.codebook)
    return codes


def decode_with_codes(
    codes: np.ndarray | None,
    phone_ids,
    durations,
    phones_per_word,
    models: AutoencoderModels,
) -> np.ndarray:
    """Generate features from discrete prosody codes plus target content."""
    counts = np.asarray(phones_per_word, dtype=np.int64).reshape(-1)
    if codes is None:
        word_vecs = np.zeros((counts.size, models.decoder.config.prosody_dim))
    else:
        codes = np.asarray(codes, dtype=np.int64)
        if codes.shape[0] != counts.size:
            raise ValidationError(
                f"{codes.shape[0]} code rows for {counts.size} words"
            )
        word_vecs = lookup(codes, models.codebook)
    phone_feats = encode_text(phone_ids, models.decoder)
    fused = broadcast_prosody(nc.constant(word_vecs), counts, phone_feats)
    frames = length_regulate(fused, durations)
    return decode_frames(frames, models.decoder).data


def reconstruct(features, align: AlignmentHierarchy, phone_ids, models: AutoencoderModels) -> np.ndarray:
    """Encode -> quantize -> decode with ground-truth durations; output has
    the same frame count as the input."""
    codes = prosody_codes(features, align, models)
    durations = np.diff(align.phone_edges)
    return decode_with_codes(codes, phone_ids, durations, align.phones_per_word(), models)


def transfer(
    ref_features,
    ref_align: AlignmentHierarchy,
    target_phone_ids,
    target_durations,
    target_phones_per_word,
    models: AutoencoderModels,
) -> np.ndarray:
    """Drive target content with the reference's prosody codes (word-aligned)."""
    counts = np.asarray(target_phones_per_word, dtype=np.int64).reshape(-1)
    if counts.size != ref_align.n_words:
        raise ValidationError(
            f"word counts differ: reference has {ref_align.n_words}, target has {counts.size}"
        )
    codes = prosody_codes(ref_features, ref_align, models)
    return decode_with_codes(codes, target_phone_ids, target_durations, counts, models)


@dataclass
class ReconstructionGraph:
    """Differentiable reconstruction with its bottleneck terms, for training."""

    output: nc.Tensor
    bottleneck: BottleneckOutput
    word_features: nc.Tensor


def reconstruction_graph(
    features,
    align: AlignmentHierarchy,
    phone_ids,
    enc_model: EncoderModel,
    codebook_param: nc.Tensor | None,
    cap_cfg: CapacityConfig,
    dec_model: DecoderModel,
    commitment_cost: float,
    bypass_quantizer: bool = False,
) -> ReconstructionGraph:
    """Build the end-to-end training graph for one utterance.

    With ``bypass_quantizer`` the word vectors flow through unquantized and
    both bottleneck losses are zero; the whole graph is then an ordinary
    differentiable function, which is what the finite-difference gradient
    checks exercise (the straight-through estimator is intentionally not the
    derivative of the quantized forward pass).
    """
    word_feats = encode(features, align, enc_model)
    if bypass_quantizer:
        zero = nc.constant(np.zeros((1, 1)))
        bn = BottleneckOutput(
            quantized=word_feats, codes=None, codebook_loss=zero, commitment_loss=zero
        )
    else:
        bn = apply_bottleneck(word_feats, codebook_param, cap_cfg, commitment_cost)
    phone_feats = encode_text(phone_ids, dec_model)
    fused = broadcast_prosody(bn.quantized, align.phones_per_word(), phone_feats)
    frames = length_regulate(fused, np.diff(align.phone_edges))
    out = decode_frames(frames, dec_model)
    return ReconstructionGraph(output=out, bottleneck=bn, word_features=word_feats)
