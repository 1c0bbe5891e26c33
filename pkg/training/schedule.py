"""Optimizer hyperparameters and the halving learning-rate schedule."""
from dataclasses import dataclass

from core_math.exceptions import ConfigError

LOSS_NORMALIZATIONS = ('sentence', 'token')


@dataclass(frozen=True)
class TrainerConfig:
    epochs: int = 10
    lr: float = 1.0
    halve_after: int = 5
    clip_norm: float = 5.0
    batch_size: int = 32
    dropout: float = 0.0
    max_len: int = 50
    seed: int = 1234
    # 'sentence': summed loss / sentences in the batch; 'token': / target tokens
    loss_normalization: str = 'sentence'

    def __post_init__(self):
        for name in ('epochs', 'halve_after', 'batch_size', 'max_len'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr <= 0 or self.clip_norm <= 0:
            raise ConfigError(f"lr and clip_norm must be positive, got {self.lr} and {self.clip_norm}")
        if self.halve_after >= self.epochs:
            raise ConfigError(
                f"halve_after ({self.halve_after}) must be smaller than epochs ({self.epochs})"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.loss_normalization not in LOSS_NORMALIZATIONS:
            raise ConfigError(
                f"loss_normalization must be one of {', '.join(LOSS_NORMALIZATIONS)}, got {self.loss_normalization!r}"
            )


def lr_at(config, epoch):
    """lr for 1-based ``epoch``: constant up to ``halve_after``, then halved every epoch."""
    if not 1 <= epoch <= config.epochs:
        raise ConfigError(f"epoch {epoch} outside 1..{config.epochs}")
    if epoch <= config.halve_after:
        return config.lr
    return config.lr * 0.5 ** (epoch - config.halve_after)
