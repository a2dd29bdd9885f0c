import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ibvq.synthdata as sd
from ibvq.errors import ConfigError, CorpusFormatError, ShapeError


@pytest.fixture(scope="module")
def small_corpus():
    return sd.build_corpus(sd.CorpusConfig(n_utterances=30, seed=7))


def one_word_spec(pitch=200.0, slope=0.0, energy=1.0, tempo=1.0, phones=(0, 1), durations=(3, 4)):
    word = sd.WordToken(
        word_id=0,
        syllables=[list(phones)],
        durations=list(durations),
        prosody=sd.ProsodyFactor(pitch_mean=pitch, pitch_slope=slope, energy=energy, tempo=tempo),
    )
    return sd.UtteranceSpec(utt_id="utt_test", words=[word])


@pytest.fixture(scope="module")
def tiny_inventory():
    cfg = sd.CorpusConfig(n_utterances=1, phone_vocab=4, seed=3)
    return sd.make_inventory(cfg, np.random.default_rng(3))


# ---------------------------------------------------------------------------
# sample_corpus
# ---------------------------------------------------------------------------


def test_sample_corpus_deterministic():
    cfg = sd.CorpusConfig(n_utterances=20, seed=7)
    assert sd.sample_corpus(cfg) == sd.sample_corpus(cfg)
    assert sd.build_corpus(cfg) == sd.build_corpus(cfg)


def test_sample_corpus_rejects_empty():
    with pytest.raises(ConfigError):
        sd.CorpusConfig(n_utterances=0).validate()


def test_sample_corpus_structure_exhaustive():
    specs = sd.sample_corpus(sd.CorpusConfig(n_utterances=100, seed=11))
    assert len(specs) == 100
    for spec in specs:
        for word in spec.words:
            assert 1 <= len(word.syllables) <= 4
            for syl in word.syllables:
                assert 1 <= len(syl) <= 3
            assert all(2 <= d <= 8 for d in word.durations)
            word.prosody.validate()


def test_zipf_repetition_present():
    specs = sd.sample_corpus(sd.CorpusConfig(n_utterances=100, seed=5))
    counts = np.bincount([w for s in specs for w in s.word_ids])
    # most frequent word should dominate the median one by a wide margin
    assert counts.max() >= 5 * max(1, int(np.median(counts)))


# ---------------------------------------------------------------------------
# render_features
# ---------------------------------------------------------------------------


def test_render_voiced_channel0_normalization(tiny_inventory):
    inv = tiny_inventory
    voiced_phone = int(np.flatnonzero(inv.voiced)[0])
    spec = one_word_spec(pitch=200.0, slope=0.0, phones=(voiced_phone,), durations=(4,))
    feats, _ = sd.render_features(spec, inv, noise_seed=0, noise_sigma=0.0)
    expect = math.log(200.0 / 50.0) / math.log(500.0 / 50.0)  # = ln4/ln10 ~ 0.602
    npt.assert_allclose(feats[:, sd.F0_CHANNEL], expect, atol=1e-15)
    assert abs(expect - 0.602) < 1e-3


def test_render_unvoiced_channels_zero(tiny_inventory):
    inv = tiny_inventory
    unvoiced_phone = int(np.flatnonzero(~inv.voiced)[0])
    spec = one_word_spec(phones=(unvoiced_phone,), durations=(5,))
    feats, _ = sd.render_features(spec, inv, noise_seed=0, noise_sigma=0.0)
    npt.assert_array_equal(feats[:, sd.F0_CHANNEL], 0.0)
    npt.assert_array_equal(feats[:, sd.VOICING_CHANNEL], 0.0)


def test_render_channel0_exact_zero_even_with_noise(tiny_inventory):
    inv = tiny_inventory
    unvoiced_phone = int(np.flatnonzero(~inv.voiced)[0])
    spec = one_word_spec(phones=(unvoiced_phone,), durations=(5,))
    feats, _ = sd.render_features(spec, inv, noise_seed=1, noise_sigma=0.01)
    npt.assert_array_equal(feats[:, sd.F0_CHANNEL], 0.0)
    assert np.any(feats[:, sd.VOICING_CHANNEL] != 0.0)  # noise does land on channel 1


def test_render_total_frames_apply_tempo(tiny_inventory):
    spec = one_word_spec(tempo=1.25, phones=(0, 1), durations=(3, 5))
    feats, align = sd.render_features(spec, tiny_inventory, noise_seed=0)
    expect = sd.round_half_up(3 * 1.25) + sd.round_half_up(5 * 1.25)
    assert feats.shape[0] == expect == align.total_frames


def test_render_slope_and_clamp_warning(tiny_inventory):
    inv = tiny_inventory
    voiced_phone = int(np.flatnonzero(inv.voiced)[0])
    spec = one_word_spec(pitch=90.0, slope=-3.0, phones=(voiced_phone,) * 3, durations=(8, 8, 8))
    with pytest.warns(sd.PitchRangeWarning):
        feats, _ = sd.render_features(spec, inv, noise_seed=0, noise_sigma=0.0)
    f0 = sd.norm_to_f0(feats[:, sd.F0_CHANNEL])
    assert f0.min() >= sd.F0_FLOOR_HZ - 1e-9
    npt.assert_allclose(f0[0], 90.0, rtol=1e-12)  # word start is unclamped


def test_render_template_scaled_by_energy(tiny_inventory):
    inv = tiny_inventory
    spec = one_word_spec(energy=1.5, phones=(2,), durations=(3,))
    feats, _ = sd.render_features(spec, inv, noise_seed=0, noise_sigma=0.0)
    npt.assert_allclose(feats[0, sd.TEMPLATE_START :], inv.templates[2] * 1.5, atol=1e-15)
    npt.assert_allclose(feats[:, sd.ENERGY_CHANNEL], 1.5, atol=1e-15)


# ---------------------------------------------------------------------------
# alignment invariants
# ---------------------------------------------------------------------------


def test_alignment_nesting_holds_corpus_wide(small_corpus):
    for utt in small_corpus.utterances:
        utt.alignment.validate()  # raises on any nesting violation
        assert utt.alignment.total_frames == utt.features.shape[0]
        npt.assert_array_equal(
            utt.alignment.phones_per_word(), utt.spec.phones_per_word()
        )


def test_prosody_recovery_from_channel0(small_corpus):
    """Un-normalizing the mean of channel 0 over a word's voiced frames
    recovers the pitch value at the word's voiced-frame midpoint."""
    checked = 0
    for utt in small_corpus.utterances:
        edges = utt.alignment.word_edges
        for w, word in enumerate(utt.spec.words):
            pros = word.prosody
            start, end = edges[w], edges[w + 1]
            voiced = utt.features[start:end, sd.VOICING_CHANNEL] > 0.5
            if voiced.sum() < 2:
                continue
            offsets = np.flatnonzero(voiced)
            true_f0 = pros.pitch_mean + pros.pitch_slope * offsets
            if true_f0.min() < sd.F0_FLOOR_HZ or true_f0.max() > sd.F0_CEIL_HZ:
                continue  # clamped words are flagged by the renderer instead
            mean_norm = utt.features[start:end, sd.F0_CHANNEL][voiced].mean()
            midpoint_f0 = pros.pitch_mean + pros.pitch_slope * offsets.mean()
            assert abs(mean_norm - sd.f0_to_norm(midpoint_f0)) < 0.01
            checked += 1
    assert checked > 50


# ---------------------------------------------------------------------------
# corpus storage
# ---------------------------------------------------------------------------


def test_corpus_round_trip(tmp_path, small_corpus):
    sd.write_corpus(small_corpus, tmp_path / "corpus")
    loaded = sd.read_corpus(tmp_path / "corpus")
    assert loaded == small_corpus


def test_corpus_write_deterministic_bytes(tmp_path, small_corpus):
    sd.write_corpus(small_corpus, tmp_path / "c1")
    sd.write_corpus(small_corpus, tmp_path / "c2")
    for rel in ("manifest.json", "utt_0000/features.csv", "utt_0000/spec.json"):
        assert (tmp_path / "c1" / rel).read_bytes() == (tmp_path / "c2" / rel).read_bytes()


def test_missing_feature_file_names_utterance(tmp_path, small_corpus):
    sd.write_corpus(small_corpus, tmp_path / "corpus")
    (tmp_path / "corpus" / "utt_0003" / "features.csv").unlink()
    with pytest.raises(CorpusFormatError, match="utt_0003"):
        sd.read_corpus(tmp_path / "corpus")


def test_bad_csv_width_reports_line(tmp_path, small_corpus):
    sd.write_corpus(small_corpus, tmp_path / "corpus")
    f = tmp_path / "corpus" / "utt_0001" / "features.csv"
    lines = f.read_text().splitlines()
    lines[4] = "1.0,2.0"
    f.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorpusFormatError, match="line 5"):
        sd.read_corpus(tmp_path / "corpus")


def test_malformed_manifest_reports_line(tmp_path):
    root = tmp_path / "corpus"
    root.mkdir()
    (root / "manifest.json").write_text('{\n "version": 1,\n oops\n}\n')
    with pytest.raises(CorpusFormatError, match="line 3"):
        sd.read_corpus(root)


# ---------------------------------------------------------------------------
# plug-in mutual information oracle
# ---------------------------------------------------------------------------


def test_mi_identical_uniform_is_log4():
    a = np.arange(400) % 4
    assert abs(sd.oracle_mi_discrete(a, a) - math.log(4)) < 1e-12


def test_mi_constant_sequences_zero():
    assert sd.oracle_mi_discrete([3] * 10, [5] * 10) == 0.0


def test_mi_hand_computed_three_cell_table():
    a = [0, 0, 0, 1]
    b = [0, 0, 1, 1]
    # joint {(0,0):2, (0,1):1, (1,1):1} over n=4, by the plug-in formula:
    expect = 0.5 * math.log(0.5 / (0.75 * 0.5)) + 0.25 * math.log(
        0.25 / (0.75 * 0.5)
    ) + 0.25 * math.log(0.25 / (0.25 * 0.5))
    assert abs(sd.oracle_mi_discrete(a, b) - expect) < 1e-12
    assert abs(expect - 0.2157615543388171) < 1e-12


def test_mi_length_mismatch():
    with pytest.raises(ShapeError):
        sd.oracle_mi_discrete([1, 2], [1, 2, 3])


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(0, 5), min_size=1, max_size=60),
    st.integers(0, 2**31 - 1),
)
def test_mi_bounds_property(a, seed):
    rng = np.random.default_rng(seed)
    b = rng.integers(0, 4, size=len(a))
    mi = sd.oracle_mi_discrete(a, b)
    assert mi >= 0.0
    assert mi <= min(sd.entropy_discrete(a), sd.entropy_discrete(b)) + 1e-12


def test_merge_symbols_rows():
    codes = np.array([[0, 1], [0, 1], [2, 1], [0, 0]])
    merged = sd.merge_symbols(codes)
    assert merged[0] == merged[1]
    assert len({merged[0], merged[2], merged[3]}) == 3
