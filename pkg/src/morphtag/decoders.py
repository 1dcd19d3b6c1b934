"""Decoders mapping context vectors to full morphological tags.

* ``MC``: one softmax over the training tagset.
* ``MCML``: an independent softmax per category (POS included), with absent
  categories predicted as the OFF value.
* ``HMCML``: the POS softmax first; feature classifiers read ``[h; pos_logits]``.
* ``SEQ``: an LSTM that emits ``Cat=Value`` symbols left to right, ending in EOS.

All functions take a batch of context vectors ``H`` of shape ``[n, d]`` (a
single ``[d]`` vector is also accepted) and return one result per row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import DecoderKind, TrainConfig
from .corpus import BOS, EOS, OFF, POS, TagSchema, Token, category_key, parse_full_tag

Params = Mapping[str, Tensor]


@dataclass(frozen=True)
class PredictedTag:
    pos: str
    feats: tuple[tuple[str, str], ...] = ()
    raw_sequence: tuple[str, ...] = ()
    pos_fallback: bool = False

    @property
    def full_tag(self) -> str:
        return "|".join([f"{POS}={self.pos}"] + [f"{c}={v}" for c, v in self.feats])


def _canonical(feats) -> tuple[tuple[str, str], ...]:
    return tuple(sorted(feats, key=lambda cv: category_key(cv[0])))


def _batch(H: Tensor) -> Tensor:
    return ad.reshape(H, (1, -1)) if H.ndim == 1 else H


def _argmax(values: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest index
    return np.argmax(values, axis=-1)


def _gold_value_ids(golds: Sequence[Token], schema: TagSchema, category: str) -> np.ndarray:
    ids = []
    for tok in golds:
        value = tok.pos if category == POS else tok.feature_map().get(category, OFF)
        try:
            ids.append(schema.value_index(category, value))
        except KeyError:
            raise ValueError(f"value {value!r} of category {category!r} unseen in training") from None
    return np.asarray(ids)


def _compose(pos: str, feats) -> PredictedTag:
    return PredictedTag(pos, _canonical((c, v) for c, v in feats if v != OFF))


def _reduce(loss: Tensor, n: int, config: TrainConfig | None) -> Tensor:
    if config is not None and config.loss_reduction == "mean" and n:
        return ad.scale(loss, 1.0 / n)
    return loss


# ------------------------------------------------------------------------ Mc


def init_mc(schema: TagSchema, config: TrainConfig, rng: ad.Rng) -> dict[str, Tensor]:
    n = len(schema.tag_list)
    return {"mc.W": ad.xavier_uniform((n, config.context_dim), rng),
            "mc.b": Tensor(np.zeros(n), requires_grad=True)}


def mc_logits(H: Tensor, params: Params) -> Tensor:
    return ad.linear(_batch(H), params["mc.W"], params["mc.b"])


def mc_predict(H: Tensor, params: Params, schema: TagSchema) -> list[PredictedTag]:
    best = _argmax(mc_logits(H, params).values)
    out = []
    for i in best:
        pos, feats = parse_full_tag(schema.tag_list[i])
        out.append(PredictedTag(pos, feats))
    return out


def mc_loss(H: Tensor, golds: Sequence[Token], params: Params, schema: TagSchema,
            config: TrainConfig | None = None) -> Tensor:
    try:
        ids = [schema.tag_index(t.full_tag) for t in golds]
    except KeyError as exc:
        raise ValueError(f"gold tag {exc.args[0]!r} is not in the training tagset") from None
    return _reduce(ad.cross_entropy(mc_logits(H, params), ids), len(golds), config)


# ---------------------------------------------------------------------- McMl


def init_mcml(schema: TagSchema, config: TrainConfig, rng: ad.Rng) -> dict[str, Tensor]:
    params = {}
    for j, cat in enumerate(schema.categories):
        n = len(schema.values[cat])
        params[f"mcml.{j}.W"] = ad.xavier_uniform((n, config.context_dim), rng)
        params[f"mcml.{j}.b"] = Tensor(np.zeros(n), requires_grad=True)
    return params


def mcml_logits(H: Tensor, params: Params, schema: TagSchema) -> list[Tensor]:
    H = _batch(H)
    return [ad.linear(H, params[f"mcml.{j}.W"], params[f"mcml.{j}.b"])
            for j in range(len(schema.categories))]


def _per_category_predict(logits: Sequence[Tensor], schema: TagSchema) -> list[PredictedTag]:
    best = [_argmax(lg.values) for lg in logits]
    out = []
    for row in range(len(best[0])):
        pos = schema.values[POS][best[0][row]]
        feats = [(cat, schema.values[cat][best[j][row]])
                 for j, cat in enumerate(schema.categories) if j > 0]
        out.append(_compose(pos, feats))
    return out


def mcml_predict(H: Tensor, params: Params, schema: TagSchema) -> list[PredictedTag]:
    return _per_category_predict(mcml_logits(H, params, schema), schema)


def _per_category_loss(logits, golds, schema, config) -> Tensor:
    terms = [ad.cross_entropy(lg, _gold_value_ids(golds, schema, cat))
             for lg, cat in zip(logits, schema.categories)]
    loss = terms[0]
    for t in terms[1:]:
        loss = loss + t
    return _reduce(loss, len(golds), config)


def mcml_loss(H: Tensor, golds: Sequence[Token], params: Params, schema: TagSchema,
              config: TrainConfig | None = None) -> Tensor:
    """Sum of per-category cross-entropies; absent categories target OFF."""
    return _per_category_loss(mcml_logits(H, params, schema), golds, schema, config)


# --------------------------------------------------------------------- HMcMl


def init_hmcml(schema: TagSchema, config: TrainConfig, rng: ad.Rng) -> dict[str, Tensor]:
    n_pos = len(schema.values[POS])
    params = {"hmcml.pos.W": ad.xavier_uniform((n_pos, config.context_dim), rng),
              "hmcml.pos.b": Tensor(np.zeros(n_pos), requires_grad=True)}
    for j, cat in enumerate(schema.categories[1:], start=1):
        n = len(schema.values[cat])
        params[f"hmcml.{j}.W"] = ad.xavier_uniform((n, config.context_dim + n_pos), rng)
        params[f"hmcml.{j}.b"] = Tensor(np.zeros(n), requires_grad=True)
    return params


def hmcml_logits(H: Tensor, params: Params, schema: TagSchema) -> list[Tensor]:
    H = _batch(H)
    pos_logits = ad.linear(H, params["hmcml.pos.W"], params["hmcml.pos.b"])
    extended = ad.concat([H, pos_logits], axis=-1)
    return [pos_logits] + [ad.linear(extended, params[f"hmcml.{j}.W"], params[f"hmcml.{j}.b"])
                           for j in range(1, len(schema.categories))]


def hmcml_predict(H: Tensor, params: Params, schema: TagSchema) -> list[PredictedTag]:
    return _per_category_predict(hmcml_logits(H, params, schema), schema)


def hmcml_loss(H: Tensor, golds: Sequence[Token], params: Params, schema: TagSchema,
               config: TrainConfig | None = None) -> Tensor:
    return _per_category_loss(hmcml_logits(H, params, schema), golds, schema, config)


# ----------------------------------------------------------------------- Seq


def init_seq(schema: TagSchema, config: TrainConfig, rng: ad.Rng) -> dict[str, Tensor]:
    V = len(schema.fv_vocab)
    W, b = ad.lstm_params(config.tag_embedding_dim + config.context_dim,
                          config.decoder_hidden, rng, config.forget_bias)
    params = {
        "seq.emb": ad.xavier_uniform((V, config.tag_embedding_dim), rng),
        "seq.lstm.W": W,
        "seq.lstm.b": b,
        "seq.out.W": ad.xavier_uniform((V, config.decoder_hidden), rng),
        "seq.out.b": Tensor(np.zeros(V), requires_grad=True),
    }
    if config.seq_init_state == "learned":
        params["seq.h0"] = Tensor(np.zeros((1, config.decoder_hidden)), requires_grad=True)
        params["seq.c0"] = Tensor(np.zeros((1, config.decoder_hidden)), requires_grad=True)
    return params


def seq_symbols(token: Token) -> list[str]:
    """Gold output sequence: POS symbol, features in canonical order, EOS."""
    return [f"{POS}={token.pos}"] + [f"{c}={v}" for c, v in token.feats] + [EOS]


def _initial_state(params: Params, n: int):
    if "seq.h0" not in params:
        return None, None
    rows = np.zeros(n, dtype=np.int64)
    return ad.take_rows(params["seq.h0"], rows), ad.take_rows(params["seq.c0"], rows)


def seq_loss(H: Tensor, golds: Sequence[Token], params: Params, schema: TagSchema,
             config: TrainConfig | None = None) -> Tensor:
    """Teacher-forced sum of per-step cross-entropies."""
    H = _batch(H)
    n = H.shape[0]
    try:
        targets = [[schema.symbol_index(s) for s in seq_symbols(t)] for t in golds]
    except KeyError as exc:
        raise ValueError(f"symbol {exc.args[0]!r} is not in the decoder vocabulary") from None
    L = max(len(t) for t in targets)
    bos = schema.symbol_index(BOS)
    tgt = np.zeros((L, n), dtype=np.int64)
    inp = np.full((L, n), bos, dtype=np.int64)
    mask = np.zeros((L, n))
    for k, seq in enumerate(targets):
        tgt[: len(seq), k] = seq
        inp[1 : len(seq), k] = seq[:-1]
        mask[: len(seq), k] = 1.0
    emb = ad.reshape(ad.take_rows(params["seq.emb"], inp.reshape(-1)), (L, n, -1))
    ctx = ad.reshape(ad.take_rows(H, np.tile(np.arange(n), L)), (L, n, -1))
    h0, c0 = _initial_state(params, n)
    G = ad.lstm_sequence(ad.concat([emb, ctx], axis=-1), params["seq.lstm.W"],
                         params["seq.lstm.b"], h0=h0, c0=c0)
    logits = ad.linear(ad.reshape(G, (L * n, -1)), params["seq.out.W"], params["seq.out.b"])
    loss = ad.cross_entropy(logits, tgt.reshape(-1), weights=mask.reshape(-1))
    return _reduce(loss, n, config)


def clean_sequence(symbols: Sequence[str], schema: TagSchema) -> PredictedTag:
    """Turn an emitted symbol list into a tag: the first POS symbol fixes the
    POS (falling back to the most frequent training POS), the first value of a
    repeated category wins, BOS/EOS are dropped."""
    pos = None
    feats: dict[str, str] = {}
    for sym in symbols:
        if sym == EOS:
            break
        if sym == BOS:
            continue
        cat, _, val = sym.partition("=")
        if cat == POS:
            if pos is None:
                pos = val
        elif cat not in feats:
            feats[cat] = val
    fallback = pos is None
    if fallback:
        pos = schema.default_pos
    return PredictedTag(pos, _canonical(feats.items()), tuple(symbols), fallback)


def seq_decode_greedy(H: Tensor, params: Params, schema: TagSchema,
                      max_len: int | None = None) -> list[PredictedTag]:
    """Greedy decoding from BOS until EOS or ``max_len`` emitted symbols."""
    if max_len is None:
        max_len = schema.M + 2
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    with ad.no_grad():
        H = _batch(H)
        n = H.shape[0]
        dh = params["seq.lstm.W"].shape[0] // 4
        h0, c0 = _initial_state(params, n)
        dtype = params["seq.lstm.W"].values.dtype
        h = Tensor(np.zeros((n, dh), dtype=dtype)) if h0 is None else h0
        c = Tensor(np.zeros((n, dh), dtype=dtype)) if c0 is None else c0
        prev = np.full(n, schema.symbol_index(BOS), dtype=np.int64)
        eos = schema.symbol_index(EOS)
        done = np.zeros(n, dtype=bool)
        emitted: list[list[str]] = [[] for _ in range(n)]
        for _ in range(max_len):
            x = ad.concat([ad.take_rows(params["seq.emb"], prev), H], axis=-1)
            h, c = ad.lstm_step(x, h, c, params["seq.lstm.W"], params["seq.lstm.b"])
            logits = ad.linear(h, params["seq.out.W"], params["seq.out.b"])
            prev = _argmax(logits.values)
            for k in np.flatnonzero(~done):
                emitted[k].append(schema.fv_vocab[prev[k]])
            done |= prev == eos
            if done.all():
                break
    return [clean_sequence(seq, schema) for seq in emitted]


# ------------------------------------------------------------------ registry

INIT = {DecoderKind.MC: init_mc, DecoderKind.MCML: init_mcml,
        DecoderKind.HMCML: init_hmcml, DecoderKind.SEQ: init_seq}
LOSS = {DecoderKind.MC: mc_loss, DecoderKind.MCML: mcml_loss,
        DecoderKind.HMCML: hmcml_loss, DecoderKind.SEQ: seq_loss}


def init_decoder(kind: DecoderKind, schema: TagSchema, config: TrainConfig,
                 rng: ad.Rng) -> dict[str, Tensor]:
    return INIT[DecoderKind.parse(kind)](schema, config, rng)


def decoder_loss(kind: DecoderKind, H: Tensor, golds: Sequence[Token], params: Params,
                 schema: TagSchema, config: TrainConfig | None = None) -> Tensor:
    return LOSS[DecoderKind.parse(kind)](H, golds, params, schema, config)


def decoder_predict(kind: DecoderKind, H: Tensor, params: Params, schema: TagSchema,
                    config: TrainConfig | None = None) -> list[PredictedTag]:
    kind = DecoderKind.parse(kind)
    with ad.no_grad():
        if kind is DecoderKind.MC:
            return mc_predict(H, params, schema)
        if kind is DecoderKind.MCML:
            return mcml_predict(H, params, schema)
        if kind is DecoderKind.HMCML:
            return hmcml_predict(H, params, schema)
        max_len = config.max_decode_len if config is not None else None
        return seq_decode_greedy(H, params, schema, max_len)
