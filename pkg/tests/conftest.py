from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from morphtag.config import TrainConfig
from morphtag.corpus import Corpus, Sentence, Token, build_schema, build_vocab, read_conllu

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "en_ud_style-50.conllu"


def tiny_config(decoder="mc", **overrides) -> TrainConfig:
    """Small dimensions so a full model trains or gradient-checks in seconds."""
    base = dict(decoder_kind=decoder, word_dim=8, char_dim=6, char_hidden=5, lstm_hidden=8,
                decoder_hidden=8, tag_embedding_dim=6, max_epochs=3, patience=50)
    base.update(overrides)
    return TrainConfig(**base).resolved()


def no_dropout(**kw) -> dict:
    return dict(word_dropout=0.0, input_dropout=0.0, state_dropout=0.0, output_dropout=0.0, **kw)


def tok(form, pos, **feats) -> Token:
    return Token(form, pos, tuple(feats.items()))


def corpus_of(*sentences, split="train") -> Corpus:
    return Corpus(tuple(Sentence(tuple(s)) for s in sentences), split)


@pytest.fixture(scope="session")
def fixture_corpus() -> Corpus:
    return read_conllu(FIXTURE, "train")


@pytest.fixture(scope="session")
def fixture_schema(fixture_corpus):
    return build_schema(fixture_corpus)


@pytest.fixture(scope="session")
def fixture_vocab(fixture_corpus):
    return build_vocab(fixture_corpus)


@pytest.fixture
def two_category_corpus() -> Corpus:
    """A two-category toy treebank (Case and Number) with a few POS values."""
    return corpus_of(
        [tok("koira", "NOUN", Case="Nom", Number="Sing"), tok("juoksee", "VERB")],
        [tok("koiran", "NOUN", Case="Gen", Number="Sing"), tok("koirat", "NOUN", Case="Nom", Number="Plur"),
         tok(".", "PUNCT")],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed"):
        for report in terminalreporter.stats.get(outcome, []):
            if report.when != "call":
                continue
            props = dict(report.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], outcome.upper(), props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for number, outcome, detail in sorted(lines):
            terminalreporter.write_line(f"criterion {number}: {outcome:6s} {detail}")
