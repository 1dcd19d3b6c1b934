"""Hyperparameters shared by the encoder, decoders and training loop."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, fields


class DecoderKind(str, enum.Enum):
    MC = "mc"
    MCML = "mcml"
    HMCML = "hmcml"
    SEQ = "seq"

    @classmethod
    def parse(cls, value) -> DecoderKind:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown decoder {value!r}; choose from {[k.value for k in cls]}"
            ) from None


@dataclass
class TrainConfig:
    """Training and architecture settings.

    ``batch_size`` and ``decay_enabled`` left as ``None`` resolve per decoder:
    5 sentences and no decay for the sequence decoder, 20 sentences with
    decay for the others.
    """

    decoder_kind: DecoderKind = DecoderKind.SEQ
    batch_size: int | None = None
    initial_lr: float = 1.0
    decay_factor: float = 0.98
    decay_step: int = 2500
    decay_enabled: bool | None = None
    max_epochs: int = 400
    patience: int = 50
    unk_substitution_prob: float = 0.5
    grad_clip_norm: float | None = 5.0
    loss_reduction: str = "sum"
    seed: int = 1
    # encoder
    word_dim: int = 300
    char_dim: int = 100
    char_hidden: int = 150
    lstm_hidden: int = 400
    lstm_layers: int = 1
    word_dropout: float = 0.5
    input_dropout: float = 0.5
    state_dropout: float = 0.3
    output_dropout: float = 0.5
    forget_bias: float = 1.0
    # decoders
    decoder_hidden: int = 800
    tag_embedding_dim: int = 150
    seq_init_state: str = "zeros"
    max_decode_len: int | None = None
    # misc
    target_dev_accuracy: float | None = None
    dtype: str = "float32"

    def __post_init__(self):
        self.decoder_kind = DecoderKind.parse(self.decoder_kind)

    @property
    def context_dim(self) -> int:
        return 2 * self.lstm_hidden

    def resolved(self) -> TrainConfig:
        cfg = dataclasses.replace(self)
        if cfg.batch_size is None:
            cfg.batch_size = 5 if cfg.decoder_kind is DecoderKind.SEQ else 20
        if cfg.decay_enabled is None:
            cfg.decay_enabled = cfg.decoder_kind is not DecoderKind.SEQ
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for name in ("word_dim", "char_dim", "char_hidden", "lstm_hidden", "lstm_layers",
                     "decoder_hidden", "tag_embedding_dim", "decay_step", "max_epochs",
                     "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        for name in ("word_dropout", "input_dropout", "state_dropout", "output_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if not 0.0 <= self.unk_substitution_prob <= 1.0:
            raise ValueError("unk_substitution_prob must be in [0, 1]")
        if self.initial_lr <= 0 or not 0 < self.decay_factor <= 1:
            raise ValueError("learning rate must be positive and decay_factor in (0, 1]")
        if self.loss_reduction not in ("sum", "mean"):
            raise ValueError("loss_reduction must be 'sum' or 'mean'")
        if self.seq_init_state not in ("zeros", "learned"):
            raise ValueError("seq_init_state must be 'zeros' or 'learned'")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["decoder_kind"] = self.decoder_kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def coerce_field(name: str, text: str):
    """Convert a config-file string to the type of TrainConfig field ``name``."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    if name not in types:
        raise KeyError(name)
    kind = str(types[name])
    text = text.strip()
    if text.lower() in ("none", "null", "") and "None" in kind:
        return None
    if name == "decoder_kind":
        return DecoderKind.parse(text)
    if kind.startswith("bool"):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected boolean, got {text!r}")
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text
