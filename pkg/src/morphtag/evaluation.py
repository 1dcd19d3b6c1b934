"""Tagging metrics: full-tag, POS and OOV accuracies, per-feature macro-F1,
OOV-label accuracy, per-category error rates and multi-run summaries."""

from __future__ import annotations

import json
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import OFF, POS, Corpus, TagSchema, Token, Vocab, category_key


class AlignmentError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"corpora diverge at token {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class Ratio:
    """``correct / total``; ``value`` is ``None`` when nothing was counted."""

    correct: int
    total: int

    @property
    def value(self) -> float | None:
        return self.correct / self.total if self.total else None

    def to_dict(self) -> dict:
        return {"value": self.value, "correct": self.correct, "total": self.total}


def aligned_tokens(gold: Corpus, pred: Corpus) -> list[tuple[Token, Token]]:
    pairs = []
    gs, ps = list(gold.tokens()), list(pred.tokens())
    for i, (g, p) in enumerate(zip(gs, ps)):
        if g.form != p.form:
            raise AlignmentError(i, f"gold form {g.form!r} vs predicted {p.form!r}")
        pairs.append((g, p))
    if len(gs) != len(ps):
        raise AlignmentError(min(len(gs), len(ps)),
                             f"{len(gs)} gold tokens vs {len(ps)} predicted tokens")
    if len(gold) != len(pred):
        raise AlignmentError(len(pairs), f"{len(gold)} gold vs {len(pred)} predicted sentences")
    return pairs


def _accuracy(pairs: Iterable[tuple[Token, Token]], same) -> Ratio:
    correct = total = 0
    for g, p in pairs:
        total += 1
        correct += bool(same(g, p))
    return Ratio(correct, total)


def full_tag_accuracy(gold: Corpus, pred: Corpus) -> Ratio:
    return _accuracy(aligned_tokens(gold, pred), lambda g, p: g.full_tag == p.full_tag)


def pos_accuracy(gold: Corpus, pred: Corpus) -> Ratio:
    return _accuracy(aligned_tokens(gold, pred), lambda g, p: g.pos == p.pos)


def oov_accuracy(gold: Corpus, pred: Corpus, vocab: Vocab) -> Ratio:
    """Full-tag accuracy over tokens whose form never occurred in training."""
    pairs = [(g, p) for g, p in aligned_tokens(gold, pred) if g.form not in vocab]
    return _accuracy(pairs, lambda g, p: g.full_tag == p.full_tag)


def oov_label_accuracy(gold: Corpus, pred: Corpus, schema: TagSchema) -> Ratio:
    """Full-tag accuracy over tokens whose gold tag is absent from training."""
    known = schema.full_tags
    pairs = [(g, p) for g, p in aligned_tokens(gold, pred) if g.full_tag not in known]
    return _accuracy(pairs, lambda g, p: g.full_tag == p.full_tag)


def _categories(schema: TagSchema | None, pairs) -> list[str]:
    cats = set(schema.feature_categories) if schema is not None else set()
    for g, p in pairs:
        cats.update(c for c, _ in g.feats)
        cats.update(c for c, _ in p.feats)
    return [POS] + sorted(cats, key=category_key)


def _value(tok: Token, category: str) -> str:
    return tok.pos if category == POS else tok.feature_map().get(category, OFF)


def per_feature_f1(gold: Corpus, pred: Corpus, schema: TagSchema | None = None) -> dict[str, float | None]:
    """Macro-F1 per category over values seen in gold or predictions (OFF
    excluded).  A category with no such value maps to ``None``."""
    pairs = aligned_tokens(gold, pred)
    out: dict[str, float | None] = {}
    for cat in _categories(schema, pairs):
        tp: Counter = Counter()
        fp: Counter = Counter()
        fn: Counter = Counter()
        for g, p in pairs:
            gv, pv = _value(g, cat), _value(p, cat)
            if gv == pv:
                tp[gv] += 1
            else:
                fp[pv] += 1
                fn[gv] += 1
        universe = (set(tp) | set(fp) | set(fn)) - {OFF}
        if not universe:
            out[cat] = None
            continue
        scores = []
        for v in sorted(universe):
            prec = tp[v] / (tp[v] + fp[v]) if tp[v] + fp[v] else 0.0
            rec = tp[v] / (tp[v] + fn[v]) if tp[v] + fn[v] else 0.0
            scores.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
        out[cat] = sum(scores) / len(scores)
    return out


def category_error_rates(gold: Corpus, pred: Corpus, schema: TagSchema | None = None) -> dict[str, float | None]:
    pairs = aligned_tokens(gold, pred)
    out = {}
    for cat in _categories(schema, pairs):
        wrong = sum(_value(g, cat) != _value(p, cat) for g, p in pairs)
        out[cat] = wrong / len(pairs) if pairs else None
    return out


@dataclass
class EvalReport:
    full_tag_acc_all: Ratio
    full_tag_acc_oov: Ratio
    pos_acc_all: Ratio
    oov_label_accuracy: Ratio
    per_feature_f1: dict[str, float | None] = field(default_factory=dict)
    category_error_rates: dict[str, float | None] = field(default_factory=dict)

    RATIOS = ("full_tag_acc_all", "full_tag_acc_oov", "pos_acc_all", "oov_label_accuracy")

    def metrics(self) -> dict[str, float | None]:
        return {name: getattr(self, name).value for name in self.RATIOS}

    def to_dict(self) -> dict:
        d = {name: getattr(self, name).to_dict() for name in self.RATIOS}
        d["per_feature_f1"] = self.per_feature_f1
        d["category_error_rates"] = self.category_error_rates
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)


def evaluate(gold: Corpus, pred: Corpus, schema: TagSchema, vocab: Vocab) -> EvalReport:
    return EvalReport(
        full_tag_acc_all=full_tag_accuracy(gold, pred),
        full_tag_acc_oov=oov_accuracy(gold, pred, vocab),
        pos_acc_all=pos_accuracy(gold, pred),
        oov_label_accuracy=oov_label_accuracy(gold, pred, schema),
        per_feature_f1=per_feature_f1(gold, pred, schema),
        category_error_rates=category_error_rates(gold, pred, schema),
    )


TABLE2_MODELS = ("mc", "mcml", "hmcml", "seq")
TABLE2_SECTIONS = (("Full tag (all words)", "full_tag_acc_all"),
                   ("Full tag (OOV words)", "full_tag_acc_oov"),
                   ("POS (all words)", "pos_acc_all"))


def table2_header() -> str:
    cols = ["Dataset"] + [f"{title} {m.upper()}" for title, _ in TABLE2_SECTIONS
                          for m in TABLE2_MODELS]
    return "\t".join(cols)


def table2_row(dataset: str, reports: Mapping[str, EvalReport]) -> str:
    """One row laid out as accuracy sections (all, OOV, POS) by decoder, in
    percent; cells without a report or with an empty denominator are blank."""
    cells = [dataset]
    for _, attr in TABLE2_SECTIONS:
        for m in TABLE2_MODELS:
            report = reports.get(m)
            value = getattr(report, attr).value if report is not None else None
            cells.append("" if value is None else f"{100 * value:.2f}")
    return "\t".join(cells)


def stability_summary(runs: Sequence[EvalReport | Mapping[str, float | None]]) -> dict[str, tuple[float, float]]:
    """Mean and sample standard deviation of each metric over independent runs."""
    if len(runs) < 2:
        raise ValueError("stability_summary needs at least two runs")
    rows = [r.metrics() if isinstance(r, EvalReport) else dict(r) for r in runs]
    out = {}
    for name in rows[0]:
        values = [row[name] for row in rows]
        if any(v is None for v in values):
            continue
        out[name] = (statistics.fmean(values), statistics.stdev(values))
    return out
