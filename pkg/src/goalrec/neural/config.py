"""Model and optimizer configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

ENCODERS = ("lstm", "conv")
VARIANTS = ("vanilla", "goal_dense", "goal_steps", "goal_token")


@dataclass
class ModelConfig:
    """Architecture knobs.

    Reference scale is 200-dim embeddings with 500 hidden units; the defaults
    here are desk scale. ``goal_count`` sizes the one-hot goal input and, for
    the goal_token variant, the extra goal rows of the embedding matrix.
    """

    vocab_size: int
    dc_count: int
    goal_count: int = 1
    embed_dim: int = 32
    hidden_dim: int = 64
    encoder: str = "lstm"
    variant: str = "vanilla"
    dropout_p: float = 0.5
    conv_widths: tuple[int, ...] = (2, 3, 4)
    conv_filters: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.vocab_size < 1 or self.dc_count < 1:
            raise ValueError("vocab_size and dc_count must be >= 1")
        if self.embed_dim < 1 or self.hidden_dim < 1 or self.goal_count < 1:
            raise ValueError("embed_dim, hidden_dim and goal_count must be >= 1")
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ValueError("dropout_p must be in [0, 1)")
        if self.encoder == "conv":
            if not self.conv_widths or any(w < 1 for w in self.conv_widths):
                raise ValueError("conv widths must be positive")
            if self.conv_filters < 1:
                raise ValueError("conv_filters must be >= 1")

    @property
    def needs_goal(self) -> bool:
        return self.variant != "vanilla"

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "dc_count": self.dc_count,
            "goal_count": self.goal_count, "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim, "encoder": self.encoder,
            "variant": self.variant, "dropout_p": self.dropout_p,
            "conv_widths": list(self.conv_widths),
            "conv_filters": self.conv_filters, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["conv_widths"] = tuple(d.get("conv_widths", (2, 3, 4)))
        return cls(**d)


@dataclass
class TrainConfig:
    """SGD schedule: classical momentum plus decoupled weight decay on
    non-bias, non-embedding weights. ``loss_alpha`` balances cross-entropy
    against the goal-definition KL term during fine-tuning.
    """

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.001
    batch_size: int = 32
    epochs: int = 10
    loss_alpha: float = 0.5
    freeze_embeddings: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not (0.0 <= self.loss_alpha <= 1.0):
            raise ValueError("loss_alpha must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate, "momentum": self.momentum,
            "weight_decay": self.weight_decay, "batch_size": self.batch_size,
            "epochs": self.epochs, "loss_alpha": self.loss_alpha,
            "freeze_embeddings": self.freeze_embeddings, "seed": self.seed,
        }
