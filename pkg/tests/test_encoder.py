from __future__ import annotations

import numpy as np
import pytest

from morphtag import autodiff as ad
from morphtag.corpus import Sentence, build_vocab
from morphtag.encoder import (char_word_repr, encode_batch, encode_sentence, init_encoder,
                              lookup_word)

from conftest import corpus_of, no_dropout, tiny_config, tok


@pytest.fixture
def setup(two_category_corpus):
    vocab = build_vocab(two_category_corpus)
    config = tiny_config()
    params = init_encoder(vocab, config, ad.make_rng(0))
    return vocab, config, params


def sentence(*forms):
    return Sentence(tuple(tok(f, "X") for f in forms))


class TestShapes:
    def test_default_dimensions(self, two_category_corpus):
        from morphtag.config import TrainConfig

        vocab = build_vocab(two_category_corpus)
        params = init_encoder(vocab, TrainConfig(), ad.make_rng(0))
        assert params["enc.char_emb"].shape == (len(vocab.chars), 100)
        assert params["enc.word_emb"].shape == (len(vocab.words), 300)
        assert params["enc.char_fwd.W"].shape == (600, 250)
        assert params["enc.sent0_fwd.W"].shape == (1600, 1000)
        H = encode_batch([sentence("koira", "juoksee")], params, vocab, TrainConfig())
        assert H.shape == (2, 800)
        assert char_word_repr("k", params, vocab).shape == (300,)

    def test_n_words_n_vectors(self, setup):
        vocab, config, params = setup
        out = encode_sentence(sentence("koira", "juoksee", "."), params, vocab, config)
        assert len(out) == 3 and all(h.shape == (16,) for h in out)

    def test_empty_form_rejected(self, setup):
        from morphtag.encoder import char_word_reprs

        vocab, _, params = setup
        with pytest.raises(ValueError):
            char_word_reprs([""], params, vocab)


class TestLookup:
    def test_known_unknown_lowercase(self):
        vocab = build_vocab(corpus_of([tok("koira", "N"), tok("kissa", "N")]))
        params = init_encoder(vocab, tiny_config(), ad.make_rng(0))
        table = params["enc.word_emb"].values
        assert np.array_equal(lookup_word("kissa", vocab, params).values, table[vocab.word_to_id["kissa"]])
        assert np.array_equal(lookup_word("Koira", vocab, params).values, table[vocab.word_to_id["koira"]])
        assert np.array_equal(lookup_word("hevonen", vocab, params).values, table[0])

    def test_pretrained_rows_copied(self):
        vocab = build_vocab(corpus_of([tok("Koira", "N"), tok("kissa", "N")]))
        vec = np.arange(8, dtype=float)
        params = init_encoder(vocab, tiny_config(), ad.make_rng(0), {"koira": vec})
        assert np.array_equal(params["enc.word_emb"].values[vocab.word_to_id["Koira"]], vec)

    def test_pretrained_dimension_checked(self):
        vocab = build_vocab(corpus_of([tok("koira", "N")]))
        with pytest.raises(ValueError, match="dims"):
            init_encoder(vocab, tiny_config(), ad.make_rng(0), {"koira": np.zeros(3)})


class TestBehaviour:
    def test_unseen_character_uses_unk(self, setup):
        vocab, _, params = setup
        a = char_word_repr("☃", params, vocab).values
        b = char_word_repr("€", params, vocab).values
        assert np.array_equal(a, b)

    def test_inference_deterministic(self, setup):
        vocab, config, params = setup
        s = [sentence("koira", "juoksee")]
        a = encode_batch(s, params, vocab, config).values
        b = encode_batch(s, params, vocab, config).values
        assert np.array_equal(a, b)
        assert np.array_equal(char_word_repr("koira", params, vocab).values,
                              char_word_repr("koira", params, vocab).values)

    def test_training_mode_applies_dropout(self, setup):
        vocab, config, params = setup
        s = [sentence("koira", "juoksee")]
        a = encode_batch(s, params, vocab, config).values
        b = encode_batch(s, params, vocab, config, ad.make_rng(1), training=True).values
        assert not np.array_equal(a, b)

    def test_batch_equals_one_at_a_time(self, setup):
        vocab, config, params = setup
        sents = [sentence("koira", "juoksee", "."), sentence("koiran"), sentence("x", "koirat")]
        batched = encode_batch(sents, params, vocab, config).values
        single = np.concatenate([encode_batch([s], params, vocab, config).values for s in sents])
        assert np.allclose(batched, single, atol=1e-6)

    def test_right_context_reaches_first_word(self, setup):
        vocab, config, params = setup
        a = encode_batch([sentence("koira", "juoksee")], params, vocab, config).values
        b = encode_batch([sentence("koira", "koiran")], params, vocab, config).values
        assert np.linalg.norm(a[0] - b[0]) > 0

    def test_every_position_sensitive_to_every_word(self, setup):
        vocab, config, params = setup
        forms = ["koira", "juoksee", ".", "koiran"]
        base = encode_batch([sentence(*forms)], params, vocab, config).values
        for k in range(len(forms)):
            changed = list(forms)
            changed[k] = "koirat"
            other = encode_batch([sentence(*changed)], params, vocab, config).values
            assert np.all(np.linalg.norm(base - other, axis=1) > 0)

    def test_gradient_reaches_every_encoder_parameter(self, setup):
        vocab, _, _ = setup
        config = tiny_config(**no_dropout())
        params = init_encoder(vocab, config, ad.make_rng(0))
        H = encode_batch([sentence("koira", "juoksee")], params, vocab, config)
        ad.total(ad.mul(H, ad.Tensor(np.ones(H.shape)))).backward()
        for name, p in params.items():
            assert p.grad is not None and np.any(p.grad), name
