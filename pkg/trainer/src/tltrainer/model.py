"""Backbone + head model assembly.

The two toy backbones stand in for pretrained feature extractors: their
weights come from a fixed per-architecture seed, so "toy-small" always
denotes the same frozen network, the way a published checkpoint would.
Only the classification head is initialized from the run's own seed.
"""

from __future__ import annotations

import zlib

import torch
from torch import nn

from .config import TrainConfig
from .errors import ConfigError

# Seed salt for the pretrained stand-ins.  Changing this invalidates every
# previously written checkpoint, so treat it like a weights version.
_BACKBONE_SALT = "tltrainer-backbone-v1"


def _backbone_seed(name: str) -> int:
    return zlib.crc32(f"{_BACKBONE_SALT}:{name}".encode("utf-8"))


def _toy_small() -> tuple[nn.Module, int]:
    layers = nn.Sequential(
        nn.Conv2d(3, 8, kernel_size=3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(8, 16, kernel_size=3, stride=2, padding=1),
        nn.ReLU(),
        nn.AdaptiveAvgPool2d(4),
        nn.Flatten(),
    )
    return layers, 16 * 4 * 4


def _toy_wide() -> tuple[nn.Module, int]:
    layers = nn.Sequential(
        nn.Conv2d(3, 16, kernel_size=5, stride=2, padding=2),
        nn.ReLU(),
        nn.Conv2d(16, 32, kernel_size=3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(32, 32, kernel_size=3, stride=2, padding=1),
        nn.ReLU(),
        nn.AdaptiveAvgPool2d(2),
        nn.Flatten(),
    )
    return layers, 32 * 2 * 2


_BUILDERS = {
    "toy-small": _toy_small,
    "toy-wide": _toy_wide,
}


class BackboneClassifier(nn.Module):
    """Frozen-or-not feature extractor with a linear head on top."""

    def __init__(self, backbone: nn.Module, feature_dim: int, n_classes: int):
        super().__init__()
        self.backbone = backbone
        self.head = nn.Linear(feature_dim, n_classes)

    def forward(self, x):
        return self.head(self.backbone(x))


def build_model(config: TrainConfig, n_classes: int) -> BackboneClassifier:
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    try:
        builder = _BUILDERS[config.backbone]
    except KeyError:
        raise ConfigError(f"unknown backbone {config.backbone!r}") from None

    # Backbone weights depend only on the architecture name.
    torch.manual_seed(_backbone_seed(config.backbone))
    backbone, feature_dim = builder()

    model = BackboneClassifier(backbone, feature_dim, n_classes)

    # Head weights depend on the run seed, so two runs of the same backbone
    # can disagree the way two fine-tuning jobs would.
    torch.manual_seed(config.seed)
    nn.init.xavier_uniform_(model.head.weight)
    nn.init.zeros_(model.head.bias)

    if config.freeze_backbone:
        for param in model.backbone.parameters():
            param.requires_grad_(False)
    return model


def backbone_fingerprint(model: BackboneClassifier) -> str:
    """Hash of the raw backbone weight bytes; bit-level identity check."""
    crc = 0
    for name, param in sorted(model.backbone.state_dict().items()):
        data = param.detach().cpu().contiguous().numpy().tobytes()
        crc = zlib.crc32(name.encode("utf-8") + data, crc)
    return f"{crc:08x}"
