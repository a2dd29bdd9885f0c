"""Experiment drivers: capacity sweeps, transfer analysis, prediction
pipelines, and the CSV reports they produce.

A sweep trains one model per (dictionary size, seed) cell on a shared
corpus and evaluates reconstruction metrics, code usage, mutual-information
estimates, cross-text transfer proxies, and the text-to-prosody predictor.
Each cell is independent: a failure marks the cell and the sweep continues.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import ibvq.numcore as nc
from ibvq.decoder import AutoencoderModels, decode_with_codes, prosody_codes, reconstruct, transfer
from ibvq.errors import ConfigError, ValidationError
from ibvq.metrics import compare, extract_pitch
from ibvq.mi import MineConfig, content_vector, mine_estimate
from ibvq.predictor import PredictorConfig, evaluate_predictor, predict_codes, train_predictor
from ibvq.quantizer import CapacityConfig, capacity, quantize_batch, usage_stats
from ibvq.synthdata import (
    ENERGY_CHANNEL,
    TEMPLATE_START,
    Corpus,
    CorpusConfig,
    merge_symbols,
    oracle_mi_discrete,
)
from ibvq.encoder import encode
from ibvq.harness.training import TrainedAutoencoder, split_corpus, train_autoencoder

DEFAULT_CAPACITY_GRID = (0, 2, 4, 8, 16, 32, 64)


@dataclass(frozen=True)
class ExperimentConfig:
    capacities: tuple[int, ...] = DEFAULT_CAPACITY_GRID
    groups: int = 2
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    train: nc.TrainConfig = field(default_factory=lambda: nc.TrainConfig(steps=5000))
    seeds: tuple[int, ...] = (1, 2, 3)
    holdout_fraction: float = 0.1
    transfer_pairs: int = 40
    predictor_steps: int = 400
    mine: MineConfig | None = field(
        default_factory=lambda: MineConfig(steps=1500, hidden=32, batch_size=256)
    )

    def validate(self) -> None:
        if not self.capacities or len(set(self.capacities)) != len(self.capacities):
            raise ConfigError("capacities must be a non-empty list of distinct K values")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in (0, 1)")


@dataclass
class CellResult:
    """One sweep cell; metric fields are NaN when not applicable or failed."""

    K: int
    G: int
    seed: int
    capacity_nats: float
    status: str = "ok"
    recon_mse: float = math.nan
    vde: float = math.nan
    gpe: float = math.nan
    ffe: float = math.nan
    mcd: float = math.nan
    plugin_mi: float = math.nan
    mine_mi: float = math.nan
    perplexity_mean: float = math.nan
    transfer_prosody_r: float = math.nan
    transfer_clearness: float = math.nan
    predictor_accuracy: float = math.nan
    predicted_codes_mse: float = math.nan
    error: str = ""


CELL_COLUMNS = [f.name for f in dataclasses.fields(CellResult)]


@dataclass
class SweepReport:
    config: ExperimentConfig
    cells: list[CellResult]

    def cell(self, k: int, seed: int) -> CellResult:
        for c in self.cells:
            if c.K == k and c.seed == seed:
                return c
        raise KeyError(f"no sweep cell for K={k}, seed={seed}")

    def mean_over_seeds(self, k: int, attr: str) -> float:
        vals = [getattr(c, attr) for c in self.cells if c.K == k and c.status == "ok"]
        vals = [v for v in vals if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan


# ---------------------------------------------------------------------------
# per-cell evaluations
# ---------------------------------------------------------------------------


def word_pitch_readout(features: np.ndarray, word_edges: np.ndarray) -> list[float]:
    """Mean voiced-frame F0 per word; NaN for words with no voiced frame."""
    track = extract_pitch(features)
    out = []
    for w in range(word_edges.size - 1):
        s, e = word_edges[w], word_edges[w + 1]
        voiced = track.voiced[s:e]
        out.append(float(track.f0[s:e][voiced].mean()) if voiced.any() else math.nan)
    return out


def phone_recovery_accuracy(
    output: np.ndarray, phone_ids, durations, templates: np.ndarray
) -> float:
    """Fraction of frames whose template channels, energy-normalized, sit
    nearest the template of the phone actually spoken there."""
    durations = np.asarray(durations, dtype=np.int64)
    frame_phones = np.repeat(np.asarray(phone_ids, dtype=np.int64), durations)
    energy = np.maximum(output[:, ENERGY_CHANNEL], 0.1)
    observed = output[:, TEMPLATE_START:] / energy[:, None]
    dists = ((observed[:, None, :] - templates[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(dists.argmin(axis=1) == frame_phones))


def reconstruction_eval(corpus: Corpus, models: AutoencoderModels, indices: list[int]) -> dict:
    mses, vdes, gpes, ffes, mcds = [], [], [], [], []
    for i in indices:
        utt = corpus.utterances[i]
        out = reconstruct(utt.features, utt.alignment, utt.spec.phone_ids, models)
        mses.append(float(np.mean((out - utt.features) ** 2)))
        rep = compare(utt.features, out)
        vdes.append(rep.vde)
        gpes.append(rep.gpe)
        ffes.append(rep.ffe)
        mcds.append(rep.mcd)
    return {
        "recon_mse": float(np.mean(mses)),
        "vde": float(np.mean(vdes)),
        "gpe": float(np.mean(gpes)),
        "ffe": float(np.mean(ffes)),
        "mcd": float(np.mean(mcds)),
    }


def corpus_codes(corpus: Corpus, models: AutoencoderModels, indices: list[int]) -> list[np.ndarray]:
    """Per-utterance (W, G) code blocks from the trained reference encoder."""
    blocks = []
    for i in indices:
        utt = corpus.utterances[i]
        feats = encode(utt.features, utt.alignment, models.encoder).data
        codes, _, _ = quantize_batch(feats, models.codebook)
        blocks.append(codes)
    return blocks


def mi_analysis(
    corpus: Corpus,
    models: AutoencoderModels,
    indices: list[int],
    mine_cfg: MineConfig | None,
) -> tuple[float, float]:
    """Plug-in MI(codes; word identity) and MINE MI(content vector; codes)."""
    blocks = corpus_codes(corpus, models, indices)
    codes = np.vstack(blocks)
    word_ids = np.array(
        [wid for i in indices for wid in corpus.utterances[i].spec.word_ids]
    )
    plugin = oracle_mi_discrete(merge_symbols(codes), word_ids)
    mine = math.nan
    if mine_cfg is not None and codes.shape[0] >= 100:
        table = models.decoder.store["embed"].data
        content = np.vstack(
            [
                content_vector(w.phone_ids, table)
                for i in indices
                for w in corpus.utterances[i].spec.words
            ]
        )
        mine = mine_estimate(content, codes, mine_cfg)
    return plugin, mine


def matched_pairs(corpus: Corpus, indices: list[int], n_pairs: int, seed: int) -> list[tuple[int, int]]:
    """Word-count-matched (reference, target) utterance pairs, ref != target."""
    by_count: dict[int, list[int]] = {}
    for i in indices:
        by_count.setdefault(corpus.utterances[i].alignment.n_words, []).append(i)
    pairs = []
    for group in by_count.values():
        for a in group:
            for b in group:
                if a != b:
                    pairs.append((a, b))
    if not pairs:
        raise ValidationError("no word-count-matched utterance pairs available")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order[: min(n_pairs, len(pairs))]]


@dataclass
class TransferResult:
    prosody_similarity_r: float
    content_clearness: float
    n_pairs: int


def run_transfer_experiment(
    models: AutoencoderModels,
    corpus: Corpus,
    indices: list[int],
    n_pairs: int = 40,
    seed: int = 0,
) -> TransferResult:
    """Objective proxies for cross-text transfer quality.

    Prosody similarity: correlation between the output's word-level pitch
    readout and the reference words' true pitch means. Content clearness:
    nearest-template phone recovery accuracy against the target's phones.
    """
    pairs = matched_pairs(corpus, indices, n_pairs, seed)
    pitch_out, pitch_ref, clearness = [], [], []
    for ref_i, tgt_i in pairs:
        ref = corpus.utterances[ref_i]
        tgt = corpus.utterances[tgt_i]
        durations = np.diff(tgt.alignment.phone_edges)
        out = transfer(
            ref.features,
            ref.alignment,
            tgt.spec.phone_ids,
            durations,
            tgt.alignment.phones_per_word(),
            models,
        )
        readout = word_pitch_readout(out, tgt.alignment.word_edges)
        for w, value in enumerate(readout):
            if not math.isnan(value):
                pitch_out.append(value)
                pitch_ref.append(ref.spec.words[w].prosody.pitch_mean)
        clearness.append(
            phone_recovery_accuracy(
                out, tgt.spec.phone_ids, durations, corpus.inventory.templates
            )
        )
    if len(pitch_out) >= 3 and np.std(pitch_out) > 1e-9:
        r = float(np.corrcoef(pitch_out, pitch_ref)[0, 1])
    else:
        r = 0.0
    return TransferResult(
        prosody_similarity_r=r,
        content_clearness=float(np.mean(clearness)),
        n_pairs=len(pairs),
    )


def predictor_experiment(
    models: AutoencoderModels,
    corpus: Corpus,
    train_indices: list[int],
    held_indices: list[int],
    steps: int,
    seed: int,
) -> tuple[float, float]:
    """Train the text-to-prosody predictor on encoder codes and measure
    held-out accuracy plus the feature MSE of decoding its predictions."""
    texts = [corpus.utterances[i].spec.word_ids for i in train_indices]
    codes = corpus_codes(corpus, models, train_indices)
    cfg = PredictorConfig(
        word_vocab=corpus.config.word_vocab,
        K=models.cap_cfg.K,
        G=models.cap_cfg.G,
        seed=seed,
    )
    model = train_predictor(
        texts, codes, cfg, nc.TrainConfig(learning_rate=5e-3, steps=steps, seed=seed)
    )
    held_texts = [corpus.utterances[i].spec.word_ids for i in held_indices]
    held_codes = corpus_codes(corpus, models, held_indices)
    report = evaluate_predictor(model, held_texts, held_codes)
    mses = []
    for i in held_indices:
        utt = corpus.utterances[i]
        predicted = predict_codes(utt.spec.word_ids, model)
        out = decode_with_codes(
            predicted,
            utt.spec.phone_ids,
            np.diff(utt.alignment.phone_edges),
            utt.alignment.phones_per_word(),
            models,
        )
        mses.append(float(np.mean((out - utt.features) ** 2)))
    return float(report.accuracy.mean()), float(np.mean(mses))


# ---------------------------------------------------------------------------
# the sweep
# ---------------------------------------------------------------------------


def run_cell(
    corpus: Corpus,
    k: int,
    seed: int,
    cfg: ExperimentConfig,
    train_indices: list[int],
    held_indices: list[int],
) -> tuple[CellResult, TrainedAutoencoder | None]:
    cap_cfg = CapacityConfig(K=k, G=cfg.groups)
    cell = CellResult(K=k, G=cfg.groups, seed=seed, capacity_nats=capacity(cap_cfg))
    train_cfg = dataclasses.replace(cfg.train, seed=seed)
    trained = train_autoencoder(corpus, cap_cfg, train_cfg, train_indices=train_indices)
    models = trained.models
    cell.__dict__.update(reconstruction_eval(corpus, models, held_indices))
    if cap_cfg.enabled:
        all_idx = train_indices + held_indices
        cell.plugin_mi, cell.mine_mi = mi_analysis(corpus, models, all_idx, cfg.mine)
        cell.perplexity_mean = float(np.mean(trained.usage))
        tr = run_transfer_experiment(
            models, corpus, held_indices, n_pairs=cfg.transfer_pairs, seed=seed
        )
        cell.transfer_prosody_r = tr.prosody_similarity_r
        cell.transfer_clearness = tr.content_clearness
        cell.predictor_accuracy, cell.predicted_codes_mse = predictor_experiment(
            models, corpus, train_indices, held_indices, steps=cfg.predictor_steps, seed=seed
        )
    else:
        cell.plugin_mi = 0.0  # no codes: the bottleneck transmits nothing
        tr = run_transfer_experiment(
            models, corpus, held_indices, n_pairs=cfg.transfer_pairs, seed=seed
        )
        cell.transfer_prosody_r = tr.prosody_similarity_r
        cell.transfer_clearness = tr.content_clearness
    return cell, trained


def run_sweep(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    corpus: Corpus | None = None,
) -> SweepReport:
    """Train and evaluate one model per (capacity, seed) cell.

    A cell failure is recorded in its row (status/error) without aborting
    the others. Every row carries the full column set either way.
    """
    from ibvq.synthdata import build_corpus  # local: avoids cycle at import time

    cfg.validate()
    if corpus is None:
        corpus = build_corpus(cfg.corpus)
    train_indices, held_indices = split_corpus(corpus, cfg.holdout_fraction)
    cells = []
    for k in cfg.capacities:
        for seed in cfg.seeds:
            try:
                cell, _ = run_cell(corpus, k, seed, cfg, train_indices, held_indices)
            except Exception as e:  # noqa: BLE001 - cell isolation is the contract
                cell = CellResult(
                    K=k,
                    G=cfg.groups,
                    seed=seed,
                    capacity_nats=capacity(CapacityConfig(K=k, G=cfg.groups)),
                    status="failed",
                    error=f"{type(e).__name__}: {e}",
                )
            cells.append(cell)
    report = SweepReport(config=cfg, cells=cells)
    if out_dir is not None:
        write_sweep_csv(Path(out_dir) / "sweep.csv", report)
        write_mi_curve_csv(Path(out_dir) / "mi_curve.csv", report)
    return report


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_sweep_csv(path: str | Path, report: SweepReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CELL_COLUMNS)
        for cell in report.cells:
            writer.writerow([_fmt(getattr(cell, col)) for col in CELL_COLUMNS])


def read_sweep_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_mi_curve_csv(path: str | Path, report: SweepReport) -> None:
    """Capacity vs. MI estimates, one row per capacity (seed-averaged)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["capacity_nats", "mine_estimate", "plugin_oracle"])
        for k in report.config.capacities:
            cap = capacity(CapacityConfig(K=k, G=report.config.groups))
            writer.writerow(
                [
                    _fmt(cap),
                    _fmt(report.mean_over_seeds(k, "mine_mi")),
                    _fmt(report.mean_over_seeds(k, "plugin_mi")),
                ]
            )


def write_capacity_table_csv(path: str | Path, report: SweepReport) -> None:
    """Seed-averaged reconstruction metrics per capacity row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["recon_mse", "vde", "gpe", "ffe", "mcd", "transfer_prosody_r", "transfer_clearness"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["K", "capacity_nats"] + cols)
        for k in report.config.capacities:
            cap = capacity(CapacityConfig(K=k, G=report.config.groups))
            writer.writerow(
                [str(k), _fmt(cap)] + [_fmt(report.mean_over_seeds(k, c)) for c in cols]
            )
