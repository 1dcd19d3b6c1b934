from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphtag.corpus import (BOS, EOS, OFF, UNK, ConlluError, Token, build_schema, build_vocab,
                             corpus_stats, load_vectors, parse_conllu, parse_full_tag,
                             serialize_full_tag)

import oracles
from conftest import corpus_of, tok

ROW = "{i}\t{form}\t_\t{pos}\t_\t{feats}\t0\tdep\t_\t_"


def conllu(*sentences):
    blocks = []
    for sent in sentences:
        lines = ["# text = x"] + [ROW.format(i=i, form=f, pos=p, feats=ft)
                                  for i, (f, p, ft) in enumerate(sent, start=1)]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n\n"


class TestParse:
    def test_basic_token(self):
        text = "1\tkoira\tkoira\tNOUN\t_\tCase=Nom|Number=Sing\t0\troot\t_\t_\n\n"
        corpus = parse_conllu(text)
        (token,) = corpus.sentences[0].tokens
        assert token == Token("koira", "NOUN", (("Case", "Nom"), ("Number", "Sing")))

    def test_underscore_feats_is_empty(self):
        corpus = parse_conllu(conllu([("juoksee", "VERB", "_")]))
        assert corpus.sentences[0].tokens[0].feats == ()

    def test_range_and_empty_nodes_skipped(self):
        text = ("1\tA\t_\tDET\t_\t_\t0\tx\t_\t_\n"
                "2-3\tdella\t_\t_\t_\t_\t_\t_\t_\t_\n"
                "2\tdi\t_\tADP\t_\t_\t0\tx\t_\t_\n"
                "3\tla\t_\tDET\t_\t_\t0\tx\t_\t_\n"
                "3.1\tghost\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\n")
        tokens = parse_conllu(text).sentences[0].tokens
        assert [t.form for t in tokens] == ["A", "di", "la"]
        assert [t.is_multiword_part for t in tokens] == [False, True, True]

    def test_multi_value_feature_is_atomic(self):
        corpus = parse_conllu(conllu([("sie", "PRON", "Case=Acc,Dat")]))
        assert corpus.sentences[0].tokens[0].feats == (("Case", "Acc,Dat"),)

    def test_file_order_canonicalized(self):
        corpus = parse_conllu(conllu([("x", "NOUN", "number=Sing|Case=Nom|Animacy=Anim")]))
        assert [c for c, _ in corpus.sentences[0].tokens[0].feats] == ["Animacy", "Case", "number"]

    def test_empty_input(self):
        corpus = parse_conllu("")
        assert len(corpus) == 0 and corpus.n_tokens == 0

    def test_sentence_boundaries(self):
        corpus = parse_conllu(conllu([("a", "X", "_")], [("b", "X", "_"), ("c", "X", "_")]))
        assert [len(s) for s in corpus.sentences] == [1, 2]

    @pytest.mark.parametrize("line, lineno", [
        ("1\tkoira\tNOUN\n", 1),
        ("# c\n1\tx\t_\tNOUN\t_\tCaseNom\t0\tx\t_\t_\n", 2),
    ])
    def test_malformed_lines_name_line_number(self, line, lineno):
        with pytest.raises(ConlluError, match=f"line {lineno}"):
            parse_conllu(line)

    def test_duplicate_category_rejected(self):
        with pytest.raises(ConlluError):
            parse_conllu(conllu([("x", "NOUN", "Case=Nom|Case=Gen")]))


class TestFullTag:
    def test_serialize(self):
        assert serialize_full_tag(tok("k", "NOUN", Case="Nom", Number="Sing")) == "POS=NOUN|Case=Nom|Number=Sing"
        assert serialize_full_tag(tok(".", "PUNCT")) == "POS=PUNCT"

    def test_unsorted_input_gives_same_output(self):
        a = Token("k", "NOUN", (("Number", "Sing"), ("Case", "Nom")))
        b = Token("k", "NOUN", (("Case", "Nom"), ("Number", "Sing")))
        assert serialize_full_tag(a) == serialize_full_tag(b)

    def test_empty_form_rejected(self):
        with pytest.raises(ValueError):
            Token("", "NOUN")

    @given(st.lists(st.tuples(st.text("ABCabcxyz", min_size=1, max_size=4),
                              st.text("AbcN12,", min_size=1, max_size=4)),
                    max_size=5, unique_by=lambda cv: cv[0]),
           st.sampled_from(["NOUN", "VERB", "X"]))
    def test_round_trip(self, feats, pos):
        t = Token("w", pos, tuple(feats))
        assert parse_full_tag(serialize_full_tag(t)) == (t.pos, t.feats)


class TestSchema:
    def test_enumeration(self):
        train = corpus_of([tok("a", "NOUN", Case="Nom"), tok("b", "VERB", Tense="Past")])
        s = build_schema(train)
        assert s.categories == ("POS", "Case", "Tense")
        assert set(s.values["Case"]) == {"Nom", OFF}
        assert set(s.values["Tense"]) == {"Past", OFF}
        assert OFF not in s.values["POS"]
        assert len(s.full_tags) == 2 and s.M == 2

    def test_fv_vocab(self, fixture_schema):
        fv = fixture_schema.fv_vocab
        assert len(fv) == len(set(fv))
        assert fv.count(BOS) == 1 and fv.count(EOS) == 1
        assert all(f"POS={p}" in fv for p in fixture_schema.values["POS"])
        for cat in fixture_schema.feature_categories:
            for v in fixture_schema.values[cat]:
                assert (f"{cat}={v}" in fv) == (v != OFF)

    def test_every_non_pos_category_has_one_off(self, fixture_schema):
        for cat in fixture_schema.feature_categories:
            assert fixture_schema.values[cat].count(OFF) == 1

    def test_full_tags_round_trip(self, fixture_schema):
        for tag in fixture_schema.full_tags:
            pos, feats = parse_full_tag(tag)
            assert serialize_full_tag(Token("w", pos, feats)) == tag

    def test_dict_round_trip(self, fixture_schema):
        again = type(fixture_schema).from_dict(json.loads(json.dumps(fixture_schema.to_dict())))
        assert again == fixture_schema

    def test_default_pos_most_frequent(self):
        train = corpus_of([tok("a", "VERB"), tok("b", "NOUN"), tok("c", "NOUN")])
        assert build_schema(train).default_pos == "NOUN"

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError):
            build_schema(parse_conllu(""))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 20))
    def test_monotone_under_added_sentences(self, seed, cut):
        sentences = parse_conllu(oracles.random_conllu(seed, 200)).sentences
        cut = min(cut, len(sentences))
        small = build_schema(corpus_of(*[s.tokens for s in sentences[:cut]]))
        big = build_schema(corpus_of(*[s.tokens for s in sentences]))
        assert set(small.categories) <= set(big.categories)
        for cat in small.categories:
            assert set(small.values[cat]) <= set(big.values[cat])
        assert small.full_tags <= big.full_tags


class TestVocab:
    def test_counting(self):
        v = build_vocab(corpus_of([tok("a", "X"), tok("b", "X"), tok("a", "X")]))
        assert v.words[0] == UNK and set(v.words[1:]) == {"a", "b"}
        assert v.singletons == {v.word_to_id["b"]}

    def test_char_inventory_without_features(self):
        v = build_vocab(corpus_of([tok("ab", "X"), tok("ca", "X")]))
        assert set(v.chars[1:]) == {"a", "b", "c"}

    def test_lookup_order(self):
        v = build_vocab(corpus_of([tok("koira", "NOUN"), tok("Kissa", "NOUN")]))
        assert v.word_id("Koira") == v.word_id("koira") != 0
        assert v.word_id("Kissa") != 0 and v.word_id("kissa") == 0
        assert v.word_id("zzz") == 0
        assert "Koira" not in v and "koira" in v

    def test_unknown_chars_map_to_zero(self, fixture_vocab):
        assert fixture_vocab.char_ids("☃") == [0]

    def test_ids_dense_and_stable(self, fixture_vocab):
        assert sorted(fixture_vocab.word_to_id.values()) == list(range(len(fixture_vocab.words)))
        again = type(fixture_vocab).from_dict(json.loads(json.dumps(fixture_vocab.to_dict())))
        assert again.word_to_id == fixture_vocab.word_to_id
        assert again.char_to_id == fixture_vocab.char_to_id
        assert again.singletons == fixture_vocab.singletons

    def test_determinism(self):
        text = oracles.random_conllu(3)
        a, b = parse_conllu(text), parse_conllu(text)
        assert a == b
        assert build_schema(a) == build_schema(b)
        assert build_vocab(a).to_dict() == build_vocab(b).to_dict()


class TestStats:
    def test_hand_counted_toy(self):
        train = corpus_of([tok("a", "N", F="1"), tok("a", "N", F="2"), tok("b", "N", F="1")])
        s = corpus_stats(train, train, build_schema(train), build_vocab(train))
        assert s.tags_per_word_avg == 1.5 and s.tags_per_word_max == 2
        assert s.pct_oov == 0 and s.oov_tag_tokens == 0 and s.oov_tag_types == 0
        assert s.pct_embedded is None and s.n_tags == 2

    def test_oov_counts(self):
        train = corpus_of([tok("a", "N"), tok("b", "V")])
        test = corpus_of([tok("a", "N"), tok("c", "N", F="1"), tok("c", "N", F="1"), tok("d", "V", F="2")],
                         split="test")
        s = corpus_stats(train, test, build_schema(train), build_vocab(train))
        assert s.pct_oov == 75.0
        assert (s.oov_tag_tokens, s.oov_tag_types) == (3, 2)
        assert s.test_types == 3

    def test_tsv_and_json_use_table_headers(self, fixture_corpus, fixture_schema, fixture_vocab):
        s = corpus_stats(fixture_corpus, fixture_corpus, fixture_schema, fixture_vocab)
        header = s.tsv_header().split("\t")
        assert header[:3] == ["Dataset", "Train Tokens", "Train Types"]
        assert "% OOV" in header and "OOV Tags Types" in header
        row = s.tsv_row("en").split("\t")
        assert len(row) == len(header) and row[header.index("% Emb")] == "n/a"
        assert json.loads(s.to_json())["# Tags"] == len(fixture_schema.full_tags)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_matches_brute_force_recount(self, seed, tmp_path):
        train_text = oracles.random_conllu(seed, 600)
        test_text = oracles.random_conllu(seed + 100, 300)
        train, test = parse_conllu(train_text), parse_conllu(test_text, "test")
        vectors = {"a0": 1, "B1": 1}
        got = json.loads(corpus_stats(train, test, build_schema(train), build_vocab(train),
                                      vectors).to_json())
        want = oracles.stats(train_text, test_text, vectors)
        assert got.keys() == want.keys()
        for key in want:
            assert got[key] == pytest.approx(want[key], abs=1e-12), key
        assert 0 <= got["% OOV"] <= 100
        assert got["OOV Tags Types"] <= got["OOV Tags Tokens"]


class TestVectors:
    def test_header_detected_and_filtered(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("3 2\nkoira 0.5 1\nKissa 2 3\nmuu 0 0\n", encoding="utf-8")
        table = load_vectors(path, 2, keep=["kissa", "koira"])
        assert set(table) == {"koira"}
        assert list(table["koira"]) == [0.5, 1.0]
        assert set(load_vectors(path)) == {"koira", "Kissa", "muu"}

    def test_wrong_dimension(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("koira 0.5 1 2\n", encoding="utf-8")
        with pytest.raises(ValueError, match="expected 2"):
            load_vectors(path, 2)
