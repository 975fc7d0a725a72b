"""Training configuration.

One dataclass carries everything the loop needs so that a run can be
reproduced from its checkpoint alone.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

from .errors import ConfigError

# Backbones that ship with the package.  Real transfer-learning backbones
# would plug in here; the toy pair exists so the full pipeline can be
# exercised on a laptop in seconds.
BACKBONES = ("toy-small", "toy-wide")

DEFAULT_INPUT_SIZE = 460
TOY_INPUT_SIZE = 32


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    ``lr_decay_rate`` is applied multiplicatively after ``lr_patience``
    consecutive epochs without a validation-accuracy improvement, exactly
    once per such streak.
    """

    backbone: str
    model_id: str
    input_size: int = DEFAULT_INPUT_SIZE
    batch_size: int = 16
    epochs: int = 60
    lr: float = 1e-4
    lr_decay_rate: float = 0.1
    lr_patience: int = 5
    freeze_backbone: bool = True
    toy: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            known = ", ".join(BACKBONES)
            raise ConfigError(
                f"unknown backbone {self.backbone!r}; available: {known}"
            )
        if not self.model_id:
            raise ConfigError("model_id must be a non-empty string")
        if self.input_size <= 0:
            raise ConfigError(f"input_size must be positive, got {self.input_size}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs <= 0:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if not 0.0 < self.lr < 1.0:
            raise ConfigError(f"lr must lie in (0, 1), got {self.lr}")
        if not 0.0 < self.lr_decay_rate < 1.0:
            raise ConfigError(
                f"lr_decay_rate must lie in (0, 1), got {self.lr_decay_rate}"
            )
        if self.lr_patience <= 0:
            raise ConfigError(f"lr_patience must be positive, got {self.lr_patience}")

    def to_dict(self) -> dict:
        return asdict(self)


def toy_config(backbone: str, model_id: str, **overrides) -> TrainConfig:
    """A TrainConfig sized for the synthetic smoke-test data."""
    defaults = dict(
        backbone=backbone,
        model_id=model_id,
        input_size=TOY_INPUT_SIZE,
        epochs=12,
        toy=True,
    )
    defaults.update(overrides)
    return TrainConfig(**defaults)
