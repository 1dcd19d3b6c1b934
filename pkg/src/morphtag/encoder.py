"""Character + word BiLSTM sentence encoder.

Each word is represented by its (fine-tuned) word embedding concatenated with
the final states of a character BiLSTM run over its spelling.  A sentence
BiLSTM over these word vectors yields one context vector per word:
``h_i = [forward_i; backward_i]``.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig
from .corpus import Sentence, Vocab


def init_encoder(vocab: Vocab, config: TrainConfig, rng: ad.Rng,
                 pretrained: Mapping[str, np.ndarray] | None = None) -> dict[str, Tensor]:
    """Create encoder parameters.  Rows of the word table are copied from
    ``pretrained`` (exact form, else lowercased) when available; the rest,
    including the UNK row, are Xavier-initialised."""
    params = {"enc.char_emb": ad.xavier_uniform((len(vocab.chars), config.char_dim), rng)}
    for side in ("fwd", "bwd"):
        W, b = ad.lstm_params(config.char_dim, config.char_hidden, rng, config.forget_bias)
        params[f"enc.char_{side}.W"], params[f"enc.char_{side}.b"] = W, b
    word_emb = ad.xavier_uniform((len(vocab.words), config.word_dim), rng)
    if pretrained:
        for i, w in enumerate(vocab.words[1:], start=1):
            vec = pretrained.get(w)
            if vec is None:
                vec = pretrained.get(w.lower())
            if vec is not None:
                if len(vec) != config.word_dim:
                    raise ValueError(f"pretrained vector for {w!r} has {len(vec)} dims, "
                                     f"expected {config.word_dim}")
                word_emb.values[i] = vec
    params["enc.word_emb"] = word_emb
    d_in = config.word_dim + 2 * config.char_hidden
    for layer in range(config.lstm_layers):
        for side in ("fwd", "bwd"):
            W, b = ad.lstm_params(d_in, config.lstm_hidden, rng, config.forget_bias)
            params[f"enc.sent{layer}_{side}.W"], params[f"enc.sent{layer}_{side}.b"] = W, b
        d_in = 2 * config.lstm_hidden
    return params


def _padded_ids(seqs: Sequence[Sequence[int]], reverse: bool) -> np.ndarray:
    T = max(len(s) for s in seqs)
    out = np.full((T, len(seqs)), -1, dtype=np.int64)
    for j, s in enumerate(seqs):
        s = list(s)[::-1] if reverse else s
        out[: len(s), j] = s
    return out


def char_word_reprs(forms: Sequence[str], params: Mapping[str, Tensor], vocab: Vocab) -> Tensor:
    """Character BiLSTM representation of each form, ``[len(forms), 2*char_hidden]``."""
    if any(not f for f in forms):
        raise ValueError("cannot build a character representation of an empty form")
    char_ids = [vocab.char_ids(f) for f in forms]
    lengths = np.array([len(c) for c in char_ids])
    U = len(forms)
    last = (lengths - 1) * U + np.arange(U)
    emb = params["enc.char_emb"]
    finals = []
    for side, reverse in (("fwd", False), ("bwd", True)):
        ids = _padded_ids(char_ids, reverse)
        T = ids.shape[0]
        x = ad.reshape(ad.take_rows(emb, ids.reshape(-1)), (T, U, -1))
        hs = ad.lstm_sequence(x, params[f"enc.char_{side}.W"], params[f"enc.char_{side}.b"])
        finals.append(ad.take_rows(ad.reshape(hs, (T * U, -1)), last))
    return ad.concat(finals, axis=-1)


def char_word_repr(form: str, params: Mapping[str, Tensor], vocab: Vocab,
                   rng: ad.Rng | None = None, training: bool = False) -> Tensor:
    # no character-level dropout, so rng and training do not change the result
    return ad.reshape(char_word_reprs([form], params, vocab), (-1,))


def lookup_word(form: str, vocab: Vocab, params: Mapping[str, Tensor]) -> Tensor:
    return ad.take_rows(params["enc.word_emb"], [vocab.word_id(form)])[0]


def _bilstm_layer(x: Tensor, lengths: np.ndarray, fwd_idx, bwd_idx, gather_f, gather_b,
                  params, prefix: str, config: TrainConfig, rng, training: bool) -> Tensor:
    """One sentence-level BiLSTM layer over token-major input ``[N, d]``."""
    S = len(lengths)
    T = int(lengths.max())
    outs = []
    for side, idx, gather in (("fwd", fwd_idx, gather_f), ("bwd", bwd_idx, gather_b)):
        xs = ad.reshape(ad.take_rows(x, idx.reshape(-1)), (T, S, -1))
        mask = None
        if training and config.state_dropout > 0:
            mask = ad.dropout_mask((S, config.lstm_hidden), config.state_dropout, rng)
            mask = mask.astype(x.values.dtype)
        hs = ad.lstm_sequence(xs, params[f"{prefix}_{side}.W"], params[f"{prefix}_{side}.b"],
                              state_mask=mask)
        outs.append(ad.take_rows(ad.reshape(hs, (T * S, -1)), gather))
    return ad.concat(outs, axis=-1)


def encode_batch(sentences: Sequence[Sentence], params: Mapping[str, Tensor], vocab: Vocab,
                 config: TrainConfig, rng: ad.Rng | None = None, training: bool = False,
                 word_ids: Sequence[int] | None = None) -> Tensor:
    """Context vectors of every token of ``sentences``, concatenated in
    sentence order: ``[n_tokens, 2*lstm_hidden]``.

    ``word_ids`` overrides the per-token word lookup (used for UNK
    substitution during training).
    """
    forms = [t.form for s in sentences for t in s.tokens]
    if word_ids is None:
        word_ids = [vocab.word_id(f) for f in forms]
    unique = list(dict.fromkeys(forms))
    position = {f: i for i, f in enumerate(unique)}
    chars = ad.take_rows(char_word_reprs(unique, params, vocab), [position[f] for f in forms])
    words = ad.take_rows(params["enc.word_emb"], word_ids)
    words = ad.dropout(words, config.word_dropout, training, rng)
    x = ad.concat([words, chars], axis=-1)

    lengths = np.array([len(s) for s in sentences])
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    S = len(sentences)
    seq_f = [range(st, st + n) for st, n in zip(starts, lengths)]
    fwd_idx = _padded_ids(seq_f, reverse=False)
    bwd_idx = _padded_ids(seq_f, reverse=True)
    # row of token (sentence s, position p) in the flattened [T*S] outputs
    gather_f = np.concatenate([np.arange(n) * S + s for s, n in enumerate(lengths)])
    gather_b = np.concatenate([(n - 1 - np.arange(n)) * S + s for s, n in enumerate(lengths)])

    for layer in range(config.lstm_layers):
        x = ad.dropout(x, config.input_dropout, training, rng)
        x = _bilstm_layer(x, lengths, fwd_idx, bwd_idx, gather_f, gather_b, params,
                          f"enc.sent{layer}", config, rng, training)
    return ad.dropout(x, config.output_dropout, training, rng)


def encode_sentence(sentence: Sentence, params: Mapping[str, Tensor], vocab: Vocab,
                    config: TrainConfig, rng: ad.Rng | None = None,
                    training: bool = False) -> list[Tensor]:
    H = encode_batch([sentence], params, vocab, config, rng, training)
    return [H[i] for i in range(len(sentence))]
