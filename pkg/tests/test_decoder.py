import numpy as np
import numpy.testing as npt
import pytest

import ibvq.numcore as nc
from ibvq.decoder import (
    AutoencoderModels,
    DecoderConfig,
    DecoderModel,
    broadcast_prosody,
    decode_frames,
    decode_with_codes,
    duration_logits,
    encode_text,
    length_regulate,
    predict_durations,
    reconstruct,
    reconstruction_graph,
    transfer,
)
from ibvq.encoder import EncoderConfig, EncoderModel
from ibvq.errors import AlignmentError, ShapeError, ValidationError, VocabularyError
from ibvq.quantizer import CapacityConfig, Codebook
from ibvq.synthdata import CorpusConfig, build_corpus


@pytest.fixture(scope="module")
def corpus():
    return build_corpus(CorpusConfig(n_utterances=6, seed=21))


@pytest.fixture(scope="module")
def dec(corpus):
    return DecoderModel(DecoderConfig(n_phones=corpus.inventory.size, seed=100))


def make_models(corpus, k, seed=0):
    enc = EncoderModel(EncoderConfig(seed=seed))
    dec = DecoderModel(DecoderConfig(n_phones=corpus.inventory.size, seed=seed + 1))
    cap = CapacityConfig(K=k, G=2)
    cb = None
    if k > 0:
        rng = np.random.default_rng(seed + 2)
        cb = Codebook(entries=rng.normal(size=(k, 4)), groups=2)
    return AutoencoderModels(encoder=enc, decoder=dec, cap_cfg=cap, codebook=cb)


# ---------------------------------------------------------------------------
# encode_text
# ---------------------------------------------------------------------------


def test_encode_text_shape(dec):
    assert encode_text([3], dec).shape == (1, dec.config.phone_dim)
    assert encode_text([0, 1, 2, 3], dec).shape == (4, dec.config.phone_dim)


def test_encode_text_deterministic(dec):
    a = encode_text([0, 2, 5, 2], dec).data
    b = encode_text([0, 2, 5, 2], dec).data
    npt.assert_array_equal(a, b)


def test_encode_text_unknown_phone(dec):
    with pytest.raises(VocabularyError):
        encode_text([0, dec.config.n_phones], dec)


# ---------------------------------------------------------------------------
# broadcast_prosody / length_regulate
# ---------------------------------------------------------------------------


def test_broadcast_single_word(dec):
    word_vecs = nc.constant(np.array([[1.0, 2.0]]))
    phone_feats = nc.constant(np.zeros((3, 4)))
    out = broadcast_prosody(word_vecs, [3], phone_feats)
    assert out.shape == (3, 6)
    npt.assert_array_equal(out.data[:, 4:], np.tile([1.0, 2.0], (3, 1)))


def test_broadcast_two_words_distinct():
    word_vecs = nc.constant(np.array([[1.0], [2.0]]))
    phone_feats = nc.constant(np.zeros((2, 1)))
    out = broadcast_prosody(word_vecs, [1, 1], phone_feats)
    npt.assert_array_equal(out.data[:, 1], [1.0, 2.0])


def test_broadcast_count_mismatch():
    word_vecs = nc.constant(np.ones((2, 3)))
    phone_feats = nc.constant(np.zeros((4, 2)))
    with pytest.raises(AlignmentError):
        broadcast_prosody(word_vecs, [1, 2], phone_feats)  # sums to 3, not 4


def test_broadcast_then_slice_recovers_vectors():
    rng = np.random.default_rng(3)
    word_vecs = rng.normal(size=(3, 5))
    counts = [2, 1, 4]
    out = broadcast_prosody(nc.constant(word_vecs), counts, nc.constant(np.zeros((7, 2))))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    npt.assert_array_equal(out.data[starts, 2:], word_vecs)


def test_length_regulate_repetition():
    feats = nc.constant(np.array([[1.0, 0.0], [0.0, 1.0]]))
    out = length_regulate(feats, [2, 1])
    npt.assert_array_equal(out.data, [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def test_length_regulate_identity():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 3))
    npt.assert_array_equal(length_regulate(nc.constant(x), [1] * 5).data, x)


def test_length_regulate_rejects_zero_duration():
    with pytest.raises(ValidationError):
        length_regulate(nc.constant(np.ones((2, 2))), [0, 3])


def test_length_regulate_total_frames():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(1, 8))
        durations = rng.integers(1, 9, size=n)
        out = length_regulate(nc.constant(rng.normal(size=(n, 3))), durations)
        assert out.rows == int(durations.sum())


# ---------------------------------------------------------------------------
# decode_frames / durations
# ---------------------------------------------------------------------------


def test_decode_frames_shape_and_determinism(dec):
    rng = np.random.default_rng(6)
    ff = nc.constant(rng.normal(size=(9, dec.config.phone_dim + dec.config.prosody_dim)))
    a = decode_frames(ff, dec)
    assert a.shape == (9, dec.config.channels)
    npt.assert_array_equal(a.data, decode_frames(ff, dec).data)


def test_decode_frames_wrong_width(dec):
    with pytest.raises(ShapeError):
        decode_frames(nc.constant(np.zeros((4, 3))), dec)


def test_predict_durations_closed_forms(corpus):
    dec = DecoderModel(DecoderConfig(n_phones=corpus.inventory.size, seed=7))
    # zero the duration head so the raw output is exactly its bias
    for name in dec.duration_parameter_names():
        dec.store.params[name].data[:] = 0.0
    feats = encode_text([0, 1, 2], dec)
    npt.assert_array_equal(duration_logits(feats, dec).data, np.zeros((3, 1)))
    npt.assert_array_equal(predict_durations(feats, dec), [1, 1, 1])  # exp(0) = 1
    dec.store["dur.out.b"].data[:] = np.log(4.0)
    npt.assert_array_equal(predict_durations(feats, dec), [4, 4, 4])  # exp(ln 4) = 4


# ---------------------------------------------------------------------------
# reconstruct / transfer
# ---------------------------------------------------------------------------


def test_reconstruct_preserves_length(corpus):
    models = make_models(corpus, k=4)
    for utt in corpus.utterances[:3]:
        out = reconstruct(utt.features, utt.alignment, utt.spec.phone_ids, models)
        assert out.shape == utt.features.shape


def test_reconstruct_k0_ignores_prosody(corpus):
    """With the bottleneck off, two references with the same text but
    different prosody decode to exactly the same output."""
    models = make_models(corpus, k=0)
    utt = corpus.utterances[0]
    other = utt.features.copy()
    other[:, 0] *= 0.5  # perturb the prosody channels only
    other[:, 2] += 0.3
    a = reconstruct(utt.features, utt.alignment, utt.spec.phone_ids, models)
    b = reconstruct(other, utt.alignment, utt.spec.phone_ids, models)
    npt.assert_array_equal(a, b)


def test_transfer_degenerate_equals_reconstruct(corpus):
    models = make_models(corpus, k=8)
    utt = corpus.utterances[1]
    rec = reconstruct(utt.features, utt.alignment, utt.spec.phone_ids, models)
    tra = transfer(
        utt.features,
        utt.alignment,
        utt.spec.phone_ids,
        np.diff(utt.alignment.phone_edges),
        utt.alignment.phones_per_word(),
        models,
    )
    npt.assert_array_equal(rec, tra)


def test_transfer_word_count_mismatch(corpus):
    models = make_models(corpus, k=8)
    ref = corpus.utterances[0]
    target = None
    for cand in corpus.utterances[1:]:
        if cand.alignment.n_words != ref.alignment.n_words:
            target = cand
            break
    assert target is not None
    with pytest.raises(ValidationError):
        transfer(
            ref.features,
            ref.alignment,
            target.spec.phone_ids,
            np.diff(target.alignment.phone_edges),
            target.alignment.phones_per_word(),
            models,
        )


def test_decode_with_codes_in_code_space(corpus):
    models = make_models(corpus, k=8)
    utt = corpus.utterances[2]
    codes = np.zeros((utt.alignment.n_words, 2), dtype=np.int64)
    out = decode_with_codes(
        codes,
        utt.spec.phone_ids,
        np.diff(utt.alignment.phone_edges),
        utt.alignment.phones_per_word(),
        models,
    )
    assert out.shape == utt.features.shape


# ---------------------------------------------------------------------------
# end-to-end gradients (quantizer bypassed: the straight-through backward is
# deliberately not the derivative of the quantized forward)
# ---------------------------------------------------------------------------


def test_end_to_end_gradient_check():
    cfg = CorpusConfig(n_utterances=2, phone_vocab=4, channels=6, max_words=2, seed=77)
    corpus = build_corpus(cfg)
    enc = EncoderModel(EncoderConfig(channels=6, acoustic_dim=4, groups=2, seed=1))
    dec = DecoderModel(
        DecoderConfig(n_phones=4, channels=6, phone_dim=6, prosody_dim=4, hidden=6,
                      duration_hidden=4, seed=2)
    )
    names = ["attn.wq", "conv.k", "proj.w"]
    dec_names = ["embed", "tenc.conv.k", "fuse.w", "sdec.conv1.k", "sdec.out.w"]
    point = {f"e.{n}": enc.store[n].data.copy() for n in names}
    point.update({f"d.{n}": dec.store[n].data.copy() for n in dec_names})

    def loss(p):
        for n in names:
            enc.store.params[n] = p[f"e.{n}"]
        for n in dec_names:
            dec.store.params[n] = p[f"d.{n}"]
        total = None
        for utt in corpus.utterances:
            graph = reconstruction_graph(
                utt.features, utt.alignment, utt.spec.phone_ids,
                enc, None, CapacityConfig(K=0, G=2), dec,
                commitment_cost=0.25, bypass_quantizer=True,
            )
            term = nc.mse(graph.output, utt.features)
            total = term if total is None else nc.add(total, term)
        return total

    err = nc.grad_check(loss, point, eps=1e-5)
    assert err < 1e-4
