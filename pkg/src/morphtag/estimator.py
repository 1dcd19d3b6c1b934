"""scikit-learn compatible front end."""

from __future__ import annotations

import inspect

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .config import DecoderKind, TrainConfig
from .corpus import Corpus, Sentence, Token, build_schema, build_vocab, parse_full_tag
from .evaluation import full_tag_accuracy
from .training import Model, train


def check_sentences(X, y=None, require_tags: bool = False) -> list[Sentence]:
    """Normalise tagger input to a list of :class:`Sentence`.

    ``X`` may be a :class:`Corpus`, a sequence of :class:`Sentence`, or a
    sequence of word-form lists; in the last case ``y`` (one list of full-tag
    strings per sentence) supplies the annotation.
    """
    if isinstance(X, Corpus):
        sentences = list(X.sentences)
    else:
        sentences = []
        X = list(X)
        if y is not None and len(y) != len(X):
            raise ValueError(f"X has {len(X)} sentences but y has {len(y)}")
        for k, item in enumerate(X):
            if isinstance(item, Sentence):
                sentences.append(item)
                continue
            forms = [item] if isinstance(item, str) else list(item)
            if not forms or not all(isinstance(f, str) and f for f in forms):
                raise ValueError(f"sentence {k} must be a non-empty list of non-empty strings")
            if y is not None:
                tags = list(y[k])
                if len(tags) != len(forms):
                    raise ValueError(f"sentence {k}: {len(forms)} words but {len(tags)} tags")
                toks = []
                for form, tag in zip(forms, tags):
                    pos, feats = parse_full_tag(tag)
                    toks.append(Token(form, pos, feats))
            else:
                if require_tags:
                    raise ValueError("plain word lists need tags in y")
                toks = [Token(f, "_") for f in forms]
            sentences.append(Sentence(tuple(toks)))
    if not sentences:
        raise ValueError("no sentences given")
    return sentences


class MorphTagger(BaseEstimator):
    """Neural morphological tagger with one of four decoders.

    Parameters mirror :class:`~morphtag.config.TrainConfig`.  ``fit`` takes
    annotated sentences (or word lists plus full-tag strings) and
    ``predict`` returns full-tag strings per sentence.
    """

    def __init__(self, decoder="seq", batch_size=None, initial_lr=1.0, decay_factor=0.98,
                 decay_step=2500, decay_enabled=None, max_epochs=400, patience=50,
                 unk_substitution_prob=0.5, grad_clip_norm=5.0, loss_reduction="sum", seed=1,
                 word_dim=300, char_dim=100, char_hidden=150, lstm_hidden=400, lstm_layers=1,
                 word_dropout=0.5, input_dropout=0.5, state_dropout=0.3, output_dropout=0.5,
                 forget_bias=1.0, decoder_hidden=800, tag_embedding_dim=150,
                 seq_init_state="zeros", max_decode_len=None, target_dev_accuracy=None,
                 dtype="float32"):
        self.decoder = decoder
        self.batch_size = batch_size
        self.initial_lr = initial_lr
        self.decay_factor = decay_factor
        self.decay_step = decay_step
        self.decay_enabled = decay_enabled
        self.max_epochs = max_epochs
        self.patience = patience
        self.unk_substitution_prob = unk_substitution_prob
        self.grad_clip_norm = grad_clip_norm
        self.loss_reduction = loss_reduction
        self.seed = seed
        self.word_dim = word_dim
        self.char_dim = char_dim
        self.char_hidden = char_hidden
        self.lstm_hidden = lstm_hidden
        self.lstm_layers = lstm_layers
        self.word_dropout = word_dropout
        self.input_dropout = input_dropout
        self.state_dropout = state_dropout
        self.output_dropout = output_dropout
        self.forget_bias = forget_bias
        self.decoder_hidden = decoder_hidden
        self.tag_embedding_dim = tag_embedding_dim
        self.seq_init_state = seq_init_state
        self.max_decode_len = max_decode_len
        self.target_dev_accuracy = target_dev_accuracy
        self.dtype = dtype

    def _config(self) -> TrainConfig:
        params = self.get_params()
        names = set(inspect.signature(TrainConfig).parameters)
        kwargs = {k: v for k, v in params.items() if k in names}
        kwargs["decoder_kind"] = DecoderKind.parse(params["decoder"])
        return TrainConfig(**kwargs)

    def fit(self, X, y=None, dev=None, pretrained=None):
        sentences = check_sentences(X, y, require_tags=True)
        corpus = Corpus(tuple(sentences), "train")
        dev_corpus = corpus if dev is None else Corpus(tuple(check_sentences(dev)), "dev")
        schema, vocab = build_schema(corpus), build_vocab(corpus)
        result = train(self._config(), corpus, dev_corpus, schema, vocab, pretrained)
        self.model_ = result.model
        self.history_ = result.epochs
        self.n_epochs_ = len(result.epochs)
        return self

    @classmethod
    def from_model(cls, model: Model) -> MorphTagger:
        cfg = model.config.to_dict()
        cfg["decoder"] = cfg.pop("decoder_kind")
        est = cls(**{k: v for k, v in cfg.items() if k in cls._get_param_names()})
        est.model_ = model
        return est

    def _check_fitted(self) -> Model:
        model = getattr(self, "model_", None)
        if model is None:
            raise NotFittedError("MorphTagger is not fitted yet; call fit() first")
        return model

    def tag(self, X) -> Corpus:
        model = self._check_fitted()
        return model.tag(Corpus(tuple(check_sentences(X)), "test"))

    def predict(self, X) -> list[list[str]]:
        tagged = self.tag(X)
        return [[t.full_tag for t in s.tokens] for s in tagged.sentences]

    def score(self, X, y=None) -> float:
        gold = Corpus(tuple(check_sentences(X, y, require_tags=True)), "test")
        return full_tag_accuracy(gold, self.tag(gold)).value

