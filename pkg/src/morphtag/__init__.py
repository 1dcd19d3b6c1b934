"""Neural morphological tagging with monolithic, per-category, hierarchical
and sequence decoders over a shared character+word BiLSTM encoder."""

from .config import DecoderKind, TrainConfig
from .corpus import (OFF, Corpus, CorpusStats, Sentence, TagSchema, Token, Vocab, build_schema,
                     build_vocab, corpus_stats, load_vectors, parse_conllu, parse_full_tag,
                     read_conllu, serialize_full_tag)
from .decoders import PredictedTag
from .estimator import MorphTagger, check_sentences
from .evaluation import EvalReport, Ratio, evaluate, stability_summary
from .training import Model, TrainingDiverged, load_model, save_model, train

__all__ = [
    "DecoderKind", "TrainConfig", "OFF", "Corpus", "CorpusStats", "Sentence", "TagSchema",
    "Token", "Vocab", "build_schema", "build_vocab", "corpus_stats", "load_vectors",
    "parse_conllu", "parse_full_tag", "read_conllu", "serialize_full_tag", "PredictedTag",
    "MorphTagger", "check_sentences", "EvalReport", "Ratio", "evaluate", "stability_summary",
    "Model", "TrainingDiverged", "load_model", "save_model", "train",
]
