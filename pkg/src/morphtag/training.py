"""SGD training with learning-rate decay, early stopping and UNK training."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import DecoderKind, TrainConfig
from .corpus import Corpus, Sentence, TagSchema, Token, Vocab
from .decoders import PredictedTag, decoder_loss, decoder_predict, init_decoder
from .encoder import encode_batch, init_encoder

__all__ = [
    "DecoderKind", "TrainConfig", "TrainState", "Model", "TrainingDiverged", "ModelFormatError",
    "train", "apply_unk_substitution", "learning_rate", "save_model", "load_model",
]

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TrainingDiverged(ArithmeticError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass
class TrainState:
    epoch: int = 0
    batch_updates: int = 0
    current_lr: float = 1.0
    best_dev_accuracy: float = -1.0
    epochs_since_improvement: int = 0


def learning_rate(config: TrainConfig, batch_updates: int) -> float:
    if not config.decay_enabled:
        return config.initial_lr
    return config.initial_lr * config.decay_factor ** (batch_updates // config.decay_step)


def apply_unk_substitution(word_ids: Sequence[int], singletons, prob: float,
                           rng: ad.Rng) -> list[int]:
    """Replace each singleton occurrence by UNK (id 0) with probability ``prob``."""
    ids = np.asarray(word_ids, dtype=np.int64)
    if prob <= 0 or ids.size == 0:
        return ids.tolist()
    is_single = np.fromiter((i in singletons for i in ids.tolist()), dtype=bool, count=ids.size)
    draws = rng.random(ids.size)
    return np.where(is_single & (draws < prob), 0, ids).tolist()


@dataclass
class Model:
    """Trained encoder + decoder with everything needed to tag new text."""

    config: TrainConfig
    schema: TagSchema
    vocab: Vocab
    params: dict[str, Tensor]
    metadata: dict = field(default_factory=dict)

    @property
    def decoder_kind(self) -> DecoderKind:
        return self.config.decoder_kind

    def predict(self, sentences: Sequence[Sentence], batch_size: int = 64) -> list[list[PredictedTag]]:
        out: list[list[PredictedTag]] = []
        with ad.no_grad():
            for lo in range(0, len(sentences), batch_size):
                batch = sentences[lo : lo + batch_size]
                H = encode_batch(batch, self.params, self.vocab, self.config, training=False)
                tags = decoder_predict(self.decoder_kind, H, self.params, self.schema, self.config)
                k = 0
                for sent in batch:
                    out.append(tags[k : k + len(sent)])
                    k += len(sent)
        return out

    def tag(self, corpus: Corpus) -> Corpus:
        """Copy of ``corpus`` with POS and features replaced by predictions."""
        predictions = self.predict(list(corpus.sentences))
        sentences = []
        for sent, tags in zip(corpus.sentences, predictions):
            sentences.append(Sentence(tuple(
                Token(tok.form, p.pos, p.feats, tok.is_multiword_part)
                for tok, p in zip(sent.tokens, tags)
            )))
        return Corpus(tuple(sentences), corpus.split_name)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.params.items()}

    def restore(self, values: Mapping[str, np.ndarray]) -> None:
        for k, v in values.items():
            self.params[k].values = v.copy()


def init_model(config: TrainConfig, schema: TagSchema, vocab: Vocab,
               pretrained: Mapping[str, np.ndarray] | None = None) -> Model:
    config = config.resolved()
    rng = ad.make_rng(config.seed)
    with ad.precision(config.dtype):
        params = init_encoder(vocab, config, rng, pretrained)
        params.update(init_decoder(config.decoder_kind, schema, config, rng))
    metadata = {"format_version": FORMAT_VERSION, "seed": config.seed,
                "decoder_kind": config.decoder_kind.value, "rng": ad.RNG_ALGORITHM}
    return Model(config, schema, vocab, params, metadata)


def batch_loss(model: Model, batch: Sequence[Sentence], rng: ad.Rng, training: bool = True) -> Tensor:
    cfg = model.config
    forms = [t.form for s in batch for t in s.tokens]
    ids = [model.vocab.word_id(f) for f in forms]
    if training:
        ids = apply_unk_substitution(ids, model.vocab.singletons, cfg.unk_substitution_prob, rng)
    H = encode_batch(batch, model.params, model.vocab, cfg, rng, training, word_ids=ids)
    golds = [t for s in batch for t in s.tokens]
    return decoder_loss(cfg.decoder_kind, H, golds, model.params, model.schema, cfg)


def full_tag_accuracy_of(model: Model, corpus: Corpus) -> float:
    predictions = model.predict(list(corpus.sentences))
    correct = total = 0
    for sent, tags in zip(corpus.sentences, predictions):
        for tok, p in zip(sent.tokens, tags):
            correct += tok.full_tag == p.full_tag
            total += 1
    return correct / total if total else 0.0


@dataclass
class TrainResult:
    model: Model
    epochs: list[dict]
    batch_losses: list[float]
    state: TrainState


def train(config: TrainConfig, train_corpus: Corpus, dev: Corpus, schema: TagSchema,
          vocab: Vocab, pretrained: Mapping[str, np.ndarray] | None = None,
          on_epoch: Callable[[dict], None] | None = None,
          max_updates: int | None = None) -> TrainResult:
    """Train a tagger and return the snapshot with the best dev accuracy.

    Each epoch shuffles the training sentences, takes ``batch_size``-sentence
    SGD steps on the summed token loss (gradient clipped to
    ``grad_clip_norm``), then measures dev full-tag accuracy.  Training stops
    after ``patience`` epochs without improvement, at ``max_epochs``, when dev
    accuracy reaches ``target_dev_accuracy``, or after ``max_updates`` updates.
    """
    if len(train_corpus) == 0:
        raise ValueError("training corpus is empty")
    if len(dev) == 0:
        raise ValueError("development corpus is empty")
    model = init_model(config, schema, vocab, pretrained)
    cfg = model.config
    model.metadata["config"] = cfg.to_dict()
    rng = ad.make_rng(cfg.seed + 1)
    params = list(model.params.values())
    state = TrainState(current_lr=cfg.initial_lr)
    sentences = list(train_corpus.sentences)
    epochs: list[dict] = []
    losses: list[float] = []
    best = model.snapshot()
    stop = False

    with ad.precision(cfg.dtype):
        while state.epoch < cfg.max_epochs and not stop:
            started = time.perf_counter()
            order = rng.permutation(len(sentences))
            epoch_loss = 0.0
            for lo in range(0, len(order), cfg.batch_size):
                batch = [sentences[i] for i in order[lo : lo + cfg.batch_size]]
                loss = batch_loss(model, batch, rng)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite loss {value} at epoch {state.epoch + 1}, "
                        f"batch update {state.batch_updates + 1}"
                    )
                loss.backward()
                ad.clip_grad_norm(params, cfg.grad_clip_norm)
                ad.sgd_step(params, state.current_lr)
                state.batch_updates += 1
                state.current_lr = learning_rate(cfg, state.batch_updates)
                losses.append(value)
                epoch_loss += value
                if max_updates is not None and state.batch_updates >= max_updates:
                    stop = True
                    break
            state.epoch += 1
            dev_acc = full_tag_accuracy_of(model, dev)
            if dev_acc > state.best_dev_accuracy:
                state.best_dev_accuracy = dev_acc
                state.epochs_since_improvement = 0
                best = model.snapshot()
            else:
                state.epochs_since_improvement += 1
            record = {"epoch": state.epoch, "train_loss": epoch_loss, "dev_accuracy": dev_acc,
                      "lr": state.current_lr, "seconds": time.perf_counter() - started}
            epochs.append(record)
            log.info("epoch %d loss %.4f dev %.4f lr %.4f", state.epoch, epoch_loss, dev_acc,
                     state.current_lr)
            if on_epoch is not None:
                on_epoch(record)
            if state.epochs_since_improvement >= cfg.patience:
                break
            if cfg.target_dev_accuracy is not None and dev_acc >= cfg.target_dev_accuracy:
                break

    model.restore(best)
    model.metadata["best_dev_accuracy"] = state.best_dev_accuracy
    model.metadata["epochs_trained"] = state.epoch
    return TrainResult(model, epochs, losses, state)


# --------------------------------------------------------------- persistence


def save_model(model: Model, path) -> None:
    metadata = dict(model.metadata)
    metadata.update({
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "schema": model.schema.to_dict(),
        "vocab": model.vocab.to_dict(),
    })
    ad.save_tensors(path, {k: v.values for k, v in model.params.items()}, metadata)


def load_model(path) -> Model:
    try:
        arrays, meta = ad.load_tensors(path)
    except (OSError, ad.ContainerError) as exc:
        raise ModelFormatError(str(exc)) from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: model format version {meta.get('format_version')!r}, "
                               f"expected {FORMAT_VERSION}")
    try:
        config = TrainConfig.from_dict(meta["config"])
        schema = TagSchema.from_dict(meta["schema"])
        vocab = Vocab.from_dict(meta["vocab"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: incomplete model metadata ({exc})") from exc
    params = {k: Tensor(v, requires_grad=True, dtype=v.dtype) for k, v in arrays.items()}
    extra = {k: v for k, v in meta.items() if k not in ("config", "schema", "vocab")}
    extra["config"] = meta["config"]
    return Model(config, schema, vocab, params, extra)


def write_epoch_log(path, epochs: Sequence[dict]) -> None:
    Path(path).write_text("".join(json.dumps(e) + "\n" for e in epochs), encoding="utf-8")
