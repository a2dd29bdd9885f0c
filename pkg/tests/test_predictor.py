import numpy as np
import numpy.testing as npt
import pytest

import ibvq.numcore as nc
from ibvq.errors import ConfigError, VocabularyError
from ibvq.predictor import (
    PredictorConfig,
    PredictorModel,
    evaluate_predictor,
    predict_codes,
    train_predictor,
)


def deterministic_dataset(vocab=12, k=8, g=2, sentences=60, seed=0):
    """Each word identity maps to exactly one code tuple."""
    rng = np.random.default_rng(seed)
    mapping = rng.integers(0, k, size=(vocab, g))
    texts, codes = [], []
    for _ in range(sentences):
        t = rng.integers(0, vocab, size=rng.integers(2, 6)).tolist()
        texts.append(t)
        codes.append(mapping[t])
    return texts, codes, mapping


def test_k0_is_config_error():
    with pytest.raises(ConfigError):
        PredictorConfig(word_vocab=10, K=0).validate()


def test_overfit_deterministic_mapping_reaches_full_accuracy():
    texts, codes, _ = deterministic_dataset()
    cfg = PredictorConfig(word_vocab=12, K=8, seed=3)
    model = train_predictor(texts, codes, cfg,
                            nc.TrainConfig(learning_rate=5e-3, steps=500, seed=3))
    report = evaluate_predictor(model, texts, codes)
    npt.assert_allclose(report.accuracy, 1.0)
    assert np.all(report.perplexity < 1.2)


def test_training_deterministic_under_seed():
    texts, codes, _ = deterministic_dataset(sentences=20)
    cfg = PredictorConfig(word_vocab=12, K=8, seed=5)
    tc = nc.TrainConfig(learning_rate=5e-3, steps=60, seed=5)
    m1 = train_predictor(texts, codes, cfg, tc)
    m2 = train_predictor(texts, codes, cfg, tc)
    for name in m1.store.names():
        npt.assert_array_equal(m1.store[name].data, m2.store[name].data)


def test_code_value_exceeding_k_rejected():
    texts = [[0, 1]]
    codes = [np.array([[0, 9], [1, 1]])]
    with pytest.raises(ConfigError):
        train_predictor(texts, codes, PredictorConfig(word_vocab=4, K=8))


def test_predict_shapes_and_range():
    model = PredictorModel(PredictorConfig(word_vocab=10, K=6, seed=1))
    out = predict_codes([4], model)
    assert out.shape == (1, 2)
    assert np.all((out >= 0) & (out < 6))
    many = predict_codes([1, 2, 3, 4, 5], model)
    assert many.shape == (5, 2)


def test_predict_deterministic():
    model = PredictorModel(PredictorConfig(word_vocab=10, K=6, seed=2))
    npt.assert_array_equal(predict_codes([1, 2, 3], model), predict_codes([1, 2, 3], model))


def test_unknown_word_rejected():
    model = PredictorModel(PredictorConfig(word_vocab=10, K=6))
    with pytest.raises(VocabularyError):
        predict_codes([10], model)


def test_evaluate_perfect_and_chance_levels():
    texts, codes, mapping = deterministic_dataset(vocab=8, k=16, sentences=40, seed=9)
    cfg = PredictorConfig(word_vocab=8, K=16, seed=9)
    model = train_predictor(texts, codes, cfg,
                            nc.TrainConfig(learning_rate=5e-3, steps=500, seed=9))
    report = evaluate_predictor(model, texts, codes)
    npt.assert_allclose(report.accuracy, 1.0)

    # a uniform predictor (all logits zero) against random codes sits at
    # chance: accuracy ~1/16, perplexity exactly 16
    rng = np.random.default_rng(11)
    rand_codes = [rng.integers(0, 16, size=(len(t), 2)) for t in texts]
    uniform = PredictorModel(cfg)
    for g in range(2):
        uniform.store[f"head{g}.w"].data[:] = 0.0
        uniform.store[f"head{g}.b"].data[:] = 0.0
    chance = evaluate_predictor(uniform, texts, rand_codes)
    assert np.all(np.abs(chance.accuracy - 1 / 16) < 0.05)
    npt.assert_allclose(chance.perplexity, 16.0, atol=1e-9)
