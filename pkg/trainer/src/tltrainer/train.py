"""Training loop with plateau-triggered learning-rate decay.

The schedule: an epoch "improves" when validation accuracy strictly exceeds
the best seen so far.  After `lr_patience` consecutive non-improving epochs
the learning rate is multiplied by `lr_decay_rate`, exactly once per streak,
and the streak counter resets.  Backpropagation itself is the framework's
job; this module owns the loop structure, the freeze policy, and the
schedule.
"""

from __future__ import annotations

import math
import pickle
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .config import TrainConfig
from .data import Dataset, read_manifest, split_tensor
from .errors import TrainingError
from .model import BackboneClassifier, backbone_fingerprint, build_model

CHECKPOINT_FORMAT = "tltrainer-checkpoint/1"


class PlateauDecay:
    """Tracks the improve-else-decay rule on a higher-is-better metric."""

    def __init__(self, patience: int, rate: float):
        self.patience = patience
        self.rate = rate
        self.best = None
        self.streak = 0
        self.triggers = 0

    def step(self, value: float) -> bool:
        """Record one epoch's metric; True when a decay fires this epoch."""
        if self.best is None or value > self.best:
            self.best = value
            self.streak = 0
            return False
        self.streak += 1
        if self.streak >= self.patience:
            self.streak = 0
            self.triggers += 1
            return True
        return False


@dataclass
class Checkpoint:
    """Everything needed to reproduce inference for one trained model."""

    config: TrainConfig
    classes: tuple
    state_dict: dict
    log: list = field(default_factory=list)

    @property
    def model_id(self) -> str:
        return self.config.model_id

    def build(self) -> BackboneClassifier:
        model = build_model(self.config, len(self.classes))
        model.load_state_dict(self.state_dict)
        model.eval()
        return model


def _epoch_order(n: int, seed: int, epoch: int) -> torch.Tensor:
    gen = torch.Generator()
    gen.manual_seed(seed * 100003 + epoch)
    return torch.randperm(n, generator=gen)


def _quadratic_loss(logits: torch.Tensor, targets: torch.Tensor,
                    n_classes: int) -> torch.Tensor:
    onehot = nn.functional.one_hot(targets, n_classes).to(logits.dtype)
    probs = torch.softmax(logits, dim=1)
    return torch.mean((probs - onehot) ** 2)


def _run_epoch(model, optimizer, pixels, labels, n_classes, batch_size,
               order) -> tuple[float, float]:
    """One pass over the training tensors; returns (mean loss, accuracy)."""
    model.train()
    losses = []
    correct = 0
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        batch_x = pixels[idx]
        batch_y = labels[idx]
        optimizer.zero_grad()
        logits = model(batch_x)
        loss = _quadratic_loss(logits, batch_y, n_classes)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingError(f"non-finite training loss ({value}); aborting")
        loss.backward()
        optimizer.step()
        losses.append(value)
        correct += int((logits.argmax(dim=1) == batch_y).sum())
    return float(np.mean(losses)), correct / len(order)


@torch.no_grad()
def _accuracy(model, pixels, labels) -> float:
    model.eval()
    logits = model(pixels)
    return float((logits.argmax(dim=1) == labels).float().mean())


def train(config: TrainConfig, manifest_path, data_root=None) -> Checkpoint:
    """Fit a head (and optionally the backbone) on the manifest's train split.

    Validation accuracy drives the plateau schedule.  Raises TrainingError if
    the loss goes non-finite or a frozen backbone's weights drift.
    """
    dataset = read_manifest(manifest_path)
    n_classes = len(dataset.classes)

    torch.manual_seed(config.seed)
    model = build_model(config, n_classes)
    frozen_before = backbone_fingerprint(model) if config.freeze_backbone else None

    trainable = [p for p in model.parameters() if p.requires_grad]
    if not trainable:
        raise TrainingError("nothing to train: every parameter is frozen")
    optimizer = torch.optim.Adam(trainable, lr=config.lr)

    _, train_px, train_y = split_tensor(
        dataset, "train", config.input_size, config.toy, data_root
    )
    _, val_px, val_y = split_tensor(
        dataset, "val", config.input_size, config.toy, data_root
    )
    train_px = torch.from_numpy(train_px)
    train_y = torch.from_numpy(train_y)
    val_px = torch.from_numpy(val_px)
    val_y = torch.from_numpy(val_y)

    schedule = PlateauDecay(config.lr_patience, config.lr_decay_rate)
    lr = config.lr
    log = []
    for epoch in range(config.epochs):
        order = _epoch_order(len(train_y), config.seed, epoch)
        train_loss, train_acc = _run_epoch(
            model, optimizer, train_px, train_y, n_classes,
            config.batch_size, order,
        )
        val_acc = _accuracy(model, val_px, val_y)
        decayed = schedule.step(val_acc)
        entry = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": train_loss,
            "train_accuracy": train_acc,
            "val_accuracy": val_acc,
            "lr_decayed": decayed,
        }
        log.append(entry)
        if decayed:
            lr *= config.lr_decay_rate
            for group in optimizer.param_groups:
                group["lr"] = lr

    if config.freeze_backbone:
        frozen_after = backbone_fingerprint(model)
        if frozen_after != frozen_before:
            raise TrainingError(
                "frozen backbone weights changed during training "
                f"({frozen_before} -> {frozen_after})"
            )

    state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    return Checkpoint(
        config=config, classes=dataset.classes, state_dict=state, log=log
    )


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": checkpoint.config.to_dict(),
        "classes": list(checkpoint.classes),
        "state_dict": checkpoint.state_dict,
        "log": checkpoint.log,
    }
    torch.save(payload, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, pickle.UnpicklingError, EOFError) as exc:
        raise TrainingError(f"cannot load checkpoint '{path}': {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise TrainingError(f"'{path}' is not a {CHECKPOINT_FORMAT} checkpoint")
    return Checkpoint(
        config=TrainConfig(**payload["config"]),
        classes=tuple(payload["classes"]),
        state_dict=payload["state_dict"],
        log=payload["log"],
    )
