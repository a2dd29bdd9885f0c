"""Reference encoder: frame-level feature extraction plus hierarchical
pooling down to word-level acoustic vectors.

One self-attention block and one convolution block (each with a residual
connection and layer norm) stand in for a deeper feed-forward transformer
stack: global context plus local filtering at desk scale. Pooling is
frame-weighted at every level, so the word vector equals the plain mean
over the word's frames regardless of the intermediate phone/syllable path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import ibvq.numcore as nc
from ibvq.errors import AlignmentError, ConfigError, ShapeError
from ibvq.synthdata.types import AlignmentHierarchy

CONV_WIDTH = 3


@dataclass(frozen=True)
class EncoderConfig:
    channels: int = 16
    acoustic_dim: int = 8
    groups: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.acoustic_dim % self.groups != 0:
            raise ConfigError(
                f"acoustic_dim {self.acoustic_dim} must be divisible by groups {self.groups}"
            )
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")


class EncoderModel:
    """Parameter container; all computation lives in the module functions."""

    def __init__(self, config: EncoderConfig):
        config.validate()
        self.config = config
        self.store = nc.ParamStore()
        rng = np.random.default_rng(config.seed)
        c, d = config.channels, config.acoustic_dim
        for name in ("attn.wq", "attn.wk", "attn.wv"):
            self.store.add(name, nc.glorot_uniform(rng, c, c))
        # residual-branch outputs start small so the stream is near-identity
        self.store.add("attn.wo", 0.1 * nc.glorot_uniform(rng, c, c))
        self.store.add("attn.ln_g", np.ones((1, c)))
        self.store.add("attn.ln_b", np.zeros((1, c)))
        self.store.add("conv.k", 0.1 * nc.glorot_uniform(rng, CONV_WIDTH * c, c))
        self.store.add("conv.b", np.zeros((1, c)))
        self.store.add("conv.ln_g", np.ones((1, c)))
        self.store.add("conv.ln_b", np.zeros((1, c)))
        self.store.add("proj.w", nc.glorot_uniform(rng, c, d))
        self.store.add("proj.b", np.zeros((1, d)))
        self._pe_cache: np.ndarray = nc.sinusoid_table(256, c)

    def positional(self, length: int) -> np.ndarray:
        if length > self._pe_cache.shape[0]:
            self._pe_cache = nc.sinusoid_table(length, self.config.channels)
        return self._pe_cache[:length]


def extract_frame_features(x, model: EncoderModel) -> nc.Tensor:
    """Map a (T, C) feature matrix to (T, D) frame-level acoustic features.

    Sinusoidal positional encoding is added to the input before the blocks,
    so frame order matters to the output. Blocks are pre-norm: the residual
    stream carries the raw input channels to the output projection, which
    matters here because single input channels (pitch, voicing, energy) are
    meaningful on their own and per-frame normalization would entangle them
    with the channel statistics of the phone content.
    """
    p = model.store
    xt = x if isinstance(x, nc.Tensor) else nc.constant(x)
    if xt.cols != model.config.channels:
        raise ShapeError(
            f"input has {xt.cols} channels, model expects {model.config.channels}"
        )
    h = nc.add(xt, nc.constant(model.positional(xt.rows)))
    normed = nc.layer_norm(h, p["attn.ln_g"], p["attn.ln_b"])
    attended = nc.attention(
        nc.affine(normed, p["attn.wq"]),
        nc.affine(normed, p["attn.wk"]),
        nc.affine(normed, p["attn.wv"]),
    )
    h = nc.add(h, nc.affine(attended, p["attn.wo"]))
    normed = nc.layer_norm(h, p["conv.ln_g"], p["conv.ln_b"])
    conv = nc.relu(nc.conv1d(normed, p["conv.k"], p["conv.b"], width=CONV_WIDTH))
    h = nc.add(h, conv)
    return nc.affine(h, p["proj.w"], p["proj.b"])


def _edges_in_parent(child_edges: np.ndarray, parent_edges: np.ndarray) -> np.ndarray:
    # child edges are a subset of parent edges; express them as parent indices
    idx = np.searchsorted(parent_edges, child_edges)
    if not np.array_equal(parent_edges[idx], child_edges):
        raise AlignmentError("segment edges are not nested")
    return idx


def pool_hierarchy(frames: nc.Tensor, align: AlignmentHierarchy) -> dict[str, nc.Tensor]:
    """Average frame features up the phone -> syllable -> word hierarchy.

    Each level averages over its constituent frames (children weighted by
    their frame counts), which makes the hierarchy associative: the word row
    equals the direct mean over the word's frames.
    """
    align.validate()
    if align.total_frames != frames.rows:
        raise AlignmentError(
            f"alignment covers {align.total_frames} frames, features have {frames.rows}"
        )
    phones = nc.segment_mean(frames, align.phone_edges)
    phone_frames = np.diff(align.phone_edges).astype(np.float64)
    syl_edges = _edges_in_parent(align.syllable_edges, align.phone_edges)
    syllables = nc.segment_mean(phones, syl_edges, weights=phone_frames)
    syl_frames = np.diff(align.syllable_edges).astype(np.float64)
    word_edges = _edges_in_parent(align.word_edges, align.syllable_edges)
    words = nc.segment_mean(syllables, word_edges, weights=syl_frames)
    return {"phone": phones, "syllable": syllables, "word": words}


def encode(x, align: AlignmentHierarchy, model: EncoderModel) -> nc.Tensor:
    """Word-level acoustic features (W, D) for one utterance."""
    return pool_hierarchy(extract_frame_features(x, model), align)["word"]
