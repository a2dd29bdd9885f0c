"""Synthetic corpus with fully known content and prosody ground truth."""

from ibvq.synthdata.discrete_mi import entropy_discrete, merge_symbols, oracle_mi_discrete
from ibvq.synthdata.generate import (
    PitchRangeWarning,
    build_corpus,
    f0_to_norm,
    make_inventory,
    make_lexicon,
    norm_to_f0,
    render_features,
    sample_corpus,
)
from ibvq.synthdata.storage import read_corpus, write_corpus
from ibvq.synthdata.types import (
    ENERGY_CHANNEL,
    F0_CEIL_HZ,
    F0_CHANNEL,
    F0_FLOOR_HZ,
    TEMPLATE_START,
    TEMPO_CHOICES,
    VOICING_CHANNEL,
    AlignmentHierarchy,
    Corpus,
    CorpusConfig,
    LexiconWord,
    PhoneInventory,
    ProsodyFactor,
    Utterance,
    UtteranceSpec,
    WordToken,
    round_half_up,
)

__all__ = [
    "ENERGY_CHANNEL",
    "F0_CEIL_HZ",
    "F0_CHANNEL",
    "F0_FLOOR_HZ",
    "TEMPLATE_START",
    "TEMPO_CHOICES",
    "VOICING_CHANNEL",
    "AlignmentHierarchy",
    "Corpus",
    "CorpusConfig",
    "LexiconWord",
    "PhoneInventory",
    "PitchRangeWarning",
    "ProsodyFactor",
    "Utterance",
    "UtteranceSpec",
    "WordToken",
    "build_corpus",
    "entropy_discrete",
    "f0_to_norm",
    "make_inventory",
    "make_lexicon",
    "merge_symbols",
    "norm_to_f0",
    "oracle_mi_discrete",
    "read_corpus",
    "render_features",
    "round_half_up",
    "sample_corpus",
    "write_corpus",
]
