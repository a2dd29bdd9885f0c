"""Command-line entry point.

Every command takes explicit seeds and writes deterministic artifacts: the
same invocation produces bit-identical output files. Exit codes: 0 success,
1 validation/configuration error, 2 numeric/training failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

import ibvq.numcore as nc
from ibvq.decoder import reconstruct, transfer
from ibvq.errors import (
    ConfigError,
    IbvqError,
    NumericError,
    ValidationError,
)
from ibvq.harness.experiments import (
    ExperimentConfig,
    SweepReport,
    CellResult,
    mi_analysis,
    run_sweep,
    write_capacity_table_csv,
    write_mi_curve_csv,
    write_sweep_csv,
    read_sweep_csv,
)
from ibvq.harness.training import load_models, save_models, split_corpus, train_autoencoder
from ibvq.mi import MineConfig
from ibvq.predictor import PredictorConfig, predict_codes, train_predictor
from ibvq.quantizer import CapacityConfig, save_codes
from ibvq.synthdata import CorpusConfig, build_corpus, read_corpus, write_corpus
from ibvq.harness.experiments import corpus_codes

_FLOAT_FMT = "%.17g"


def _load_json_config(path: str | None, cls, **overrides):
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed config {path}, line {e.lineno}: {e.msg}") from e
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"bad config for {cls.__name__}: {e}") from e


def _find_utterance(corpus, utt_id: str):
    for utt in corpus.utterances:
        if utt.spec.utt_id == utt_id:
            return utt
    raise ValidationError(f"utterance {utt_id!r} not found in corpus")


def _corpus_for_ckpt(args, ckpt_dir: Path):
    if getattr(args, "corpus", None):
        return read_corpus(args.corpus)
    pointer = ckpt_dir / "corpus_path.txt"
    if pointer.is_file():
        return read_corpus(pointer.read_text().strip())
    raise ConfigError(
        "checkpoint has no recorded corpus path; pass --corpus explicitly"
    )


def cmd_gen_data(args) -> int:
    cfg = _load_json_config(args.config, CorpusConfig, seed=args.seed)
    corpus = build_corpus(cfg)
    write_corpus(corpus, args.out)
    print(f"wrote {len(corpus.utterances)} utterances to {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus = read_corpus(args.corpus)
    cap_cfg = CapacityConfig(K=args.K, G=args.G)
    train_cfg = nc.TrainConfig(
        learning_rate=args.learning_rate,
        steps=args.steps,
        seed=args.seed,
        batch_size=args.batch_size,
        commitment_cost=args.commitment_cost,
    )
    train_idx, _ = split_corpus(corpus)
    trained = train_autoencoder(corpus, cap_cfg, train_cfg, train_indices=train_idx)
    out = Path(args.out)
    save_models(out, trained.models)
    (out / "corpus_path.txt").write_text(str(Path(args.corpus).resolve()) + "\n")
    curve_path = out / "loss_curve.csv"
    with curve_path.open("w") as fh:
        fh.write("step,total,mse,codebook,commitment\n")
        for p in trained.loss_curve:
            fh.write(
                f"{p.step},{p.total!r},{p.mse!r},{p.codebook!r},{p.commitment!r}\n"
            )
    final = trained.loss_curve[-1]
    print(f"trained K={args.K} G={args.G} seed={args.seed}: final loss {final.total:.6f}")
    if trained.usage is not None:
        print(f"code perplexity per group: {np.round(trained.usage, 3).tolist()}")
    return 0


def cmd_reconstruct(args) -> int:
    ckpt = Path(args.ckpt)
    models = load_models(ckpt)
    corpus = _corpus_for_ckpt(args, ckpt)
    utt = _find_utterance(corpus, args.utt)
    out = reconstruct(utt.features, utt.alignment, utt.spec.phone_ids, models)
    np.savetxt(args.out, out, fmt=_FLOAT_FMT, delimiter=",")
    print(f"reconstructed {args.utt}: {out.shape[0]} frames -> {args.out}")
    return 0


def cmd_transfer(args) -> int:
    ckpt = Path(args.ckpt)
    models = load_models(ckpt)
    corpus = _corpus_for_ckpt(args, ckpt)
    ref = _find_utterance(corpus, args.ref)
    tgt = _find_utterance(corpus, args.target)
    out = transfer(
        ref.features,
        ref.alignment,
        tgt.spec.phone_ids,
        np.diff(tgt.alignment.phone_edges),
        tgt.alignment.phones_per_word(),
        models,
    )
    np.savetxt(args.out, out, fmt=_FLOAT_FMT, delimiter=",")
    print(f"transferred prosody of {args.ref} onto {args.target} -> {args.out}")
    return 0


def _experiment_config_from_json(path: str | None, seed: int | None) -> ExperimentConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed config {path}, line {e.lineno}: {e.msg}") from e
    if "corpus" in data:
        data["corpus"] = CorpusConfig(**data["corpus"])
    if "train" in data:
        data["train"] = nc.TrainConfig(**data["train"])
    if "mine" in data:
        data["mine"] = MineConfig(**data["mine"]) if data["mine"] is not None else None
    for key in ("capacities", "seeds"):
        if key in data:
            data[key] = tuple(data[key])
    if seed is not None:
        data["seeds"] = (seed,)
    try:
        return ExperimentConfig(**data)
    except TypeError as e:
        raise ConfigError(f"bad experiment config: {e}") from e


def cmd_sweep(args) -> int:
    cfg = _experiment_config_from_json(args.config, args.seed)
    out = Path(args.out)
    report = run_sweep(cfg, out_dir=out)
    write_capacity_table_csv(out / "capacity_table.csv", report)
    failed = [c for c in report.cells if c.status != "ok"]
    print(f"sweep complete: {len(report.cells)} cells, {len(failed)} failed -> {out}")
    for cell in failed:
        print(f"  failed K={cell.K} seed={cell.seed}: {cell.error}", file=sys.stderr)
    return 0


def cmd_mi(args) -> int:
    ckpt = Path(args.ckpt)
    models = load_models(ckpt)
    corpus = read_corpus(args.corpus)
    indices = list(range(len(corpus.utterances)))
    if not models.cap_cfg.enabled:
        raise ConfigError("the checkpoint has a disabled bottleneck: no codes to analyze")
    mine_cfg = MineConfig(steps=args.mine_steps, seed=args.seed)
    plugin, mine = mi_analysis(corpus, models, indices, mine_cfg)
    from ibvq.quantizer import capacity

    with Path(args.out).open("w") as fh:
        fh.write("capacity_nats,mine_estimate,plugin_oracle\n")
        fh.write(f"{capacity(models.cap_cfg)!r},{mine!r},{plugin!r}\n")
    print(f"MI analysis -> {args.out} (plugin {plugin:.3f}, mine {mine:.3f} nats)")
    return 0


def cmd_predict(args) -> int:
    ckpt = Path(args.ckpt)
    models = load_models(ckpt)
    if not models.cap_cfg.enabled:
        raise ConfigError("cannot predict codes for a disabled bottleneck (K=0)")
    corpus = _corpus_for_ckpt(args, ckpt)
    try:
        words = [int(w) for w in Path(args.text).read_text().split()]
    except OSError as e:
        raise ConfigError(f"cannot read text file {args.text}: {e}") from e
    except ValueError as e:
        raise ValidationError(f"text file must hold integer word ids: {e}") from e
    train_idx, _ = split_corpus(corpus)
    texts = [corpus.utterances[i].spec.word_ids for i in train_idx]
    codes = corpus_codes(corpus, models, train_idx)
    pred_cfg = PredictorConfig(
        word_vocab=corpus.config.word_vocab,
        K=models.cap_cfg.K,
        G=models.cap_cfg.G,
        seed=args.seed,
    )
    predictor = train_predictor(
        texts, codes, pred_cfg,
        nc.TrainConfig(learning_rate=5e-3, steps=args.predictor_steps, seed=args.seed),
    )
    predicted = predict_codes(words, predictor)
    save_codes(args.out, predicted)
    print(f"predicted codes for {len(words)} words -> {args.out}")
    return 0


def cmd_report(args) -> int:
    rows = read_sweep_csv(Path(args.input) / "sweep.csv")
    if not rows:
        raise ValidationError(f"no sweep rows found under {args.input}")
    cells = []
    for row in rows:
        kwargs = {}
        for f in dataclasses.fields(CellResult):
            raw = row[f.name]
            if f.type in ("int",):
                kwargs[f.name] = int(raw)
            elif f.type in ("float",):
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        cells.append(CellResult(**kwargs))
    capacities = tuple(sorted({c.K for c in cells}))
    groups = cells[0].G
    cfg = ExperimentConfig(capacities=capacities, groups=groups)
    report = SweepReport(config=cfg, cells=cells)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_capacity_table_csv(out / "capacity_table.csv", report)
    write_mi_curve_csv(out / "mi_curve.csv", report)
    write_sweep_csv(out / "sweep.csv", report)
    print(f"report tables -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibvq",
        description="Capacity-controlled vector-quantized prosody representation learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    p.add_argument("--config", help="JSON file of corpus settings")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one autoencoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--G", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--learning-rate", type=float, default=3e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--commitment-cost", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="reconstruct one utterance")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--utt", required=True)
    p.add_argument("--corpus", help="corpus directory (defaults to the one used in training)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("transfer", help="cross-text prosody transfer")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("sweep", help="capacity sweep with full evaluation")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="restrict to one seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mi", help="mutual-information analysis of one checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mine-steps", type=int, default=1500)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("predict", help="predict prosody codes from text")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--text", required=True, help="file of integer word ids")
    p.add_argument("--corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predictor-steps", type=int, default=400)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="aggregate sweep output into tables")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NumericError,) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValidationError, ConfigError, IbvqError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
