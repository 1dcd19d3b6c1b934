"""Plain-numpy reference computations of each decoder's label probability.

They re-derive the probability of a full label from the raw parameter
arrays, without the autodiff engine, so they can be compared against the
package's losses (which are negative log-probabilities).
"""

from __future__ import annotations

import itertools

import numpy as np

OFF = "_OFF_"


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def value_of(token, cat):
    return token.pos if cat == "POS" else dict(token.feats).get(cat, OFF)


def mcml_prob(h, params, schema, token):
    p = 1.0
    for j, cat in enumerate(schema.categories):
        dist = softmax(params[f"mcml.{j}.W"].values @ h + params[f"mcml.{j}.b"].values)
        p *= dist[schema.values[cat].index(value_of(token, cat))]
    return p


def mcml_joint(h, params, schema):
    """Distribution over every combination of category values, obtained
    from one softmax over summed logits on the product space."""
    logits = [params[f"mcml.{j}.W"].values @ h + params[f"mcml.{j}.b"].values
              for j in range(len(schema.categories))]
    combos = list(itertools.product(*[range(len(lg)) for lg in logits]))
    scores = np.array([sum(lg[i] for lg, i in zip(logits, c)) for c in combos])
    return combos, softmax(scores)


def hmcml_prob(h, params, schema, token):
    pos_logits = params["hmcml.pos.W"].values @ h + params["hmcml.pos.b"].values
    p = softmax(pos_logits)[schema.values["POS"].index(token.pos)]
    l = np.concatenate([h, pos_logits])
    for j, cat in enumerate(schema.categories[1:], start=1):
        dist = softmax(params[f"hmcml.{j}.W"].values @ l + params[f"hmcml.{j}.b"].values)
        p *= dist[schema.values[cat].index(value_of(token, cat))]
    return p


def lstm_step(x, h, c, W, b):
    d = h.shape[0]
    z = W @ np.concatenate([x, h]) + b
    i, f, g, o = sigmoid(z[:d]), sigmoid(z[d:2 * d]), np.tanh(z[2 * d:3 * d]), sigmoid(z[3 * d:])
    c = f * c + i * g
    return o * np.tanh(c), c


def seq_prob(h, params, schema, token):
    symbols = ["POS=" + token.pos] + [f"{c}={v}" for c, v in token.feats] + ["</s>"]
    W, b = params["seq.lstm.W"].values, params["seq.lstm.b"].values
    emb = params["seq.emb"].values
    d = W.shape[0] // 4
    g, c = np.zeros(d), np.zeros(d)
    prev = schema.fv_vocab.index("<s>")
    p = 1.0
    for sym in symbols:
        g, c = lstm_step(np.concatenate([emb[prev], h]), g, c, W, b)
        dist = softmax(params["seq.out.W"].values @ g + params["seq.out.b"].values)
        prev = schema.fv_vocab.index(sym)
        p *= dist[prev]
    return p
