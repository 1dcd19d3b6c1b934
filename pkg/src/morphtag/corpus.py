"""CoNLL-U reading, tag inventories, vocabularies and corpus statistics."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

POS = "POS"
OFF = "_OFF_"
BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


class ConlluError(ValueError):
    """Malformed CoNLL-U input."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def category_key(name: str) -> tuple[str, str]:
    return (name.lower(), name)


@dataclass(frozen=True)
class Token:
    form: str
    pos: str
    feats: tuple[tuple[str, str], ...] = ()
    is_multiword_part: bool = False

    def __post_init__(self):
        if not self.form:
            raise ValueError("token form must be non-empty")
        feats = tuple(sorted((tuple(f) for f in self.feats), key=lambda cv: category_key(cv[0])))
        names = [c for c, _ in feats]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate feature category in {feats}")
        object.__setattr__(self, "feats", feats)

    @property
    def full_tag(self) -> str:
        return serialize_full_tag(self)

    def feature_map(self) -> dict[str, str]:
        return dict(self.feats)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("sentence must contain at least one token")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...] = ()
    split_name: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def tokens(self) -> Iterable[Token]:
        for sent in self.sentences:
            yield from sent.tokens

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


# ------------------------------------------------------------------- parsing


def parse_feats(text: str, lineno: int = 0) -> tuple[tuple[str, str], ...]:
    if text == "_":
        return ()
    feats = []
    for item in text.split("|"):
        cat, sep, val = item.partition("=")
        if not sep or not cat or not val:
            raise ConlluError(lineno, f"unparsable FEATS entry {item!r}")
        feats.append((cat, val))
    return tuple(feats)


def parse_conllu(text: str, split_name: str = "train") -> Corpus:
    """Parse CoNLL-U text.  Range ids (``3-4``) and empty nodes (``1.1``) are
    skipped; words covered by a range are flagged ``is_multiword_part``."""
    sentences = []
    tokens: list[Token] = []
    covered: set[int] = set()

    def flush():
        if tokens:
            sentences.append(Sentence(tuple(tokens)))
        tokens.clear()
        covered.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(lineno, f"expected 10 tab-separated columns, got {len(cols)}")
        tid = cols[0]
        if "-" in tid:
            lo, _, hi = tid.partition("-")
            try:
                covered.update(range(int(lo), int(hi) + 1))
            except ValueError:
                raise ConlluError(lineno, f"bad range id {tid!r}") from None
            continue
        if "." in tid:
            continue
        try:
            index = int(tid)
        except ValueError:
            raise ConlluError(lineno, f"bad token id {tid!r}") from None
        if not cols[1]:
            raise ConlluError(lineno, "empty FORM")
        try:
            tokens.append(
                Token(cols[1], cols[3], parse_feats(cols[5], lineno), index in covered)
            )
        except ValueError as exc:
            if isinstance(exc, ConlluError):
                raise
            raise ConlluError(lineno, str(exc)) from None
    flush()
    return Corpus(tuple(sentences), split_name)


def read_conllu(path, split_name: str | None = None) -> Corpus:
    path = Path(path)
    return parse_conllu(path.read_text(encoding="utf-8"), split_name or path.stem)


def format_feats(feats: Sequence[tuple[str, str]]) -> str:
    return "|".join(f"{c}={v}" for c, v in feats) if feats else "_"


def serialize_full_tag(token) -> str:
    feats = sorted(token.feats, key=lambda cv: category_key(cv[0]))
    return "|".join([f"{POS}={token.pos}"] + [f"{c}={v}" for c, v in feats])


def parse_full_tag(tag: str) -> tuple[str, tuple[tuple[str, str], ...]]:
    head, *rest = tag.split("|")
    name, sep, pos = head.partition("=")
    if name != POS or not sep:
        raise ValueError(f"full tag must start with {POS}=: {tag!r}")
    feats = []
    for item in rest:
        cat, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"bad feature {item!r} in tag {tag!r}")
        feats.append((cat, val))
    return pos, tuple(feats)


# -------------------------------------------------------------------- schema


@dataclass(frozen=True)
class TagSchema:
    """Category inventory built from the training data.

    ``categories[0]`` is always ``POS``; every other category's value list
    ends with :data:`OFF`.  ``tag_list`` fixes the index order used by the
    monolithic classifier and ``fv_vocab`` is the symbol alphabet of the
    sequence decoder (``BOS``, ``EOS``, then ``Cat=Value`` symbols).
    """

    categories: tuple[str, ...]
    values: Mapping[str, tuple[str, ...]]
    tag_list: tuple[str, ...]
    fv_vocab: tuple[str, ...]
    pos_counts: Mapping[str, int] = field(default_factory=dict)

    @property
    def M(self) -> int:
        return len(self.categories) - 1

    @property
    def full_tags(self) -> frozenset[str]:
        return self._full_tags

    @property
    def feature_categories(self) -> tuple[str, ...]:
        return self.categories[1:]

    @property
    def default_pos(self) -> str:
        return max(sorted(self.pos_counts), key=lambda p: self.pos_counts[p])

    def value_index(self, category: str, value: str) -> int:
        return self._value_ids[category][value]

    def tag_index(self, tag: str) -> int:
        return self._tag_ids[tag]

    def symbol_index(self, symbol: str) -> int:
        return self._fv_ids[symbol]

    def __post_init__(self):
        object.__setattr__(self, "_value_ids",
                           {c: {v: i for i, v in enumerate(vs)} for c, vs in self.values.items()})
        object.__setattr__(self, "_tag_ids", {t: i for i, t in enumerate(self.tag_list)})
        object.__setattr__(self, "_full_tags", frozenset(self.tag_list))
        object.__setattr__(self, "_fv_ids", {s: i for i, s in enumerate(self.fv_vocab)})

    def to_dict(self) -> dict:
        return {
            "categories": list(self.categories),
            "values": {c: list(v) for c, v in self.values.items()},
            "tag_list": list(self.tag_list),
            "fv_vocab": list(self.fv_vocab),
            "pos_counts": dict(self.pos_counts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> TagSchema:
        return cls(
            tuple(d["categories"]),
            {c: tuple(v) for c, v in d["values"].items()},
            tuple(d["tag_list"]),
            tuple(d["fv_vocab"]),
            dict(d["pos_counts"]),
        )


def build_schema(train: Corpus) -> TagSchema:
    observed: dict[str, set[str]] = defaultdict(set)
    pos_counts: Counter = Counter()
    tags = set()
    for tok in train.tokens():
        pos_counts[tok.pos] += 1
        for cat, val in tok.feats:
            observed[cat].add(val)
        tags.add(serialize_full_tag(tok))
    if not tags:
        raise ValueError("cannot build a tag schema from an empty corpus")
    cats = sorted(observed, key=category_key)
    values = {POS: tuple(sorted(pos_counts))}
    for cat in cats:
        values[cat] = tuple(sorted(observed[cat])) + (OFF,)
    fv = [BOS, EOS] + [f"{POS}={p}" for p in values[POS]]
    fv += [f"{c}={v}" for c in cats for v in values[c] if v != OFF]
    return TagSchema((POS, *cats), values, tuple(sorted(tags)), tuple(fv), dict(pos_counts))


# --------------------------------------------------------------------- vocab


@dataclass(frozen=True)
class Vocab:
    words: tuple[str, ...]
    chars: tuple[str, ...]
    singletons: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "word_to_id", {w: i for i, w in enumerate(self.words)})
        object.__setattr__(self, "char_to_id", {c: i for i, c in enumerate(self.chars)})

    def word_id(self, form: str) -> int:
        """Exact form, then lowercased form, then UNK (0)."""
        wid = self.word_to_id.get(form)
        if wid is None:
            wid = self.word_to_id.get(form.lower(), 0)
        return wid

    def char_ids(self, form: str) -> list[int]:
        return [self.char_to_id.get(ch, 0) for ch in form]

    def __contains__(self, form: str) -> bool:
        return self.word_to_id.get(form, 0) != 0

    def to_dict(self) -> dict:
        return {"words": list(self.words), "chars": list(self.chars),
                "singletons": sorted(self.singletons)}

    @classmethod
    def from_dict(cls, d: dict) -> Vocab:
        return cls(tuple(d["words"]), tuple(d["chars"]), frozenset(d["singletons"]))


def build_vocab(train: Corpus) -> Vocab:
    counts: Counter = Counter()
    chars: dict[str, None] = {}
    for tok in train.tokens():
        counts[tok.form] += 1
        for ch in tok.form:
            chars.setdefault(ch)
    words = (UNK,) + tuple(counts)
    singletons = frozenset(i for i, w in enumerate(words) if counts.get(w) == 1)
    return Vocab(words, (UNK,) + tuple(chars), singletons)


# --------------------------------------------------------------------- stats

TABLE1_COLUMNS = {
    "train_tokens": "Train Tokens",
    "train_types": "Train Types",
    "tags_per_word_avg": "Tags per word Avg",
    "tags_per_word_max": "Tags per word Max",
    "pct_embedded": "% Emb",
    "n_tags": "# Tags",
    "test_tokens": "Test Tokens",
    "test_types": "Test Types",
    "pct_oov": "% OOV",
    "oov_tag_tokens": "OOV Tags Tokens",
    "oov_tag_types": "OOV Tags Types",
}


@dataclass(frozen=True)
class CorpusStats:
    train_tokens: int
    train_types: int
    tags_per_word_avg: float
    tags_per_word_max: int
    pct_embedded: float | None
    n_tags: int
    test_tokens: int
    test_types: int
    pct_oov: float
    oov_tag_tokens: int
    oov_tag_types: int

    def to_json(self) -> str:
        return json.dumps({TABLE1_COLUMNS[k]: v for k, v in asdict(self).items()},
                          ensure_ascii=False)

    def tsv_header(self) -> str:
        return "\t".join(["Dataset", *TABLE1_COLUMNS.values()])

    def tsv_row(self, dataset: str = "") -> str:
        def fmt(v):
            if v is None:
                return "n/a"
            if isinstance(v, float):
                return f"{v:.1f}"
            return str(v)

        return "\t".join([dataset] + [fmt(v) for v in asdict(self).values()])


def corpus_stats(train: Corpus, test: Corpus, schema: TagSchema, vocab: Vocab,
                 embeddings: Mapping[str, object] | None = None) -> CorpusStats:
    """Table-1 style descriptive statistics of a train/test pair."""
    train_forms = Counter()
    tags_by_type: dict[str, set[str]] = defaultdict(set)
    for tok in train.tokens():
        train_forms[tok.form] += 1
        tags_by_type[tok.form].add(serialize_full_tag(tok))
    per_type = [len(v) for v in tags_by_type.values()]

    test_forms = Counter()
    oov_tokens = 0
    oov_tag_counts: Counter = Counter()
    known_tags = schema.full_tags
    for tok in test.tokens():
        test_forms[tok.form] += 1
        if tok.form not in vocab:
            oov_tokens += 1
        tag = serialize_full_tag(tok)
        if tag not in known_tags:
            oov_tag_counts[tag] += 1
    n_test = sum(test_forms.values())

    pct_emb = None
    if embeddings is not None:
        hits = sum(1 for w in train_forms if w in embeddings or w.lower() in embeddings)
        pct_emb = 100.0 * hits / len(train_forms) if train_forms else 0.0

    return CorpusStats(
        train_tokens=sum(train_forms.values()),
        train_types=len(train_forms),
        tags_per_word_avg=sum(per_type) / len(per_type) if per_type else 0.0,
        tags_per_word_max=max(per_type, default=0),
        pct_embedded=pct_emb,
        n_tags=len(known_tags),
        test_tokens=n_test,
        test_types=len(test_forms),
        pct_oov=100.0 * oov_tokens / n_test if n_test else 0.0,
        oov_tag_tokens=sum(oov_tag_counts.values()),
        oov_tag_types=len(oov_tag_counts),
    )


# ---------------------------------------------------------- pretrained vectors


def load_vectors(path, dim: int | None = None, keep: Iterable[str] | None = None) -> dict:
    """Read a text vector file (``word v1 ... vd`` per line).

    A leading ``<count> <dim>`` header line is detected and skipped.  With
    ``keep``, only those words (exact or lowercased) are retained.
    """
    import numpy as np

    wanted = None
    if keep is not None:
        wanted = set()
        for w in keep:
            wanted.add(w)
            wanted.add(w.lower())
    table = {}
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if lineno == 0 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            if len(parts) < 2:
                continue
            word, vec = parts[0], parts[1:]
            if dim is not None and len(vec) != dim:
                raise ValueError(f"{path}:{lineno + 1}: expected {dim} values, got {len(vec)}")
            if wanted is not None and word not in wanted:
                continue
            table[word] = np.asarray(vec, dtype=np.float64)
    return table
