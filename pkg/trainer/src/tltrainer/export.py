"""Prediction export in the downstream table format.

The file layout is the other half of the shared contract:

    # model_id=<id>
    sample_id,score_<class0>,score_<class1>,...
    <sample_id>,<float>,<float>,...

Rows are written in sorted sample_id order, scores as repr() of float64
probabilities renormalized to sum to 1.  Inference runs under no_grad on a
checkpoint's rebuilt model, so exporting the same checkpoint twice yields
byte-identical files.
"""

from __future__ import annotations

import numpy as np
import torch

from .data import read_manifest, split_tensor
from .errors import DataError
from .train import Checkpoint

_EXPORT_BATCH = 64


@torch.no_grad()
def predict_scores(checkpoint: Checkpoint, pixels: np.ndarray) -> np.ndarray:
    """Row-stochastic class probabilities, shape (n_samples, n_classes)."""
    model = checkpoint.build()
    chunks = []
    tensor = torch.from_numpy(pixels)
    for start in range(0, len(tensor), _EXPORT_BATCH):
        logits = model(tensor[start:start + _EXPORT_BATCH])
        chunks.append(torch.softmax(logits, dim=1).numpy().astype(np.float64))
    probs = np.concatenate(chunks)
    # Exact row sums are not guaranteed by softmax in float32; renormalize in
    # float64 so every written row passes the reader's 1e-6 sum check.
    return probs / probs.sum(axis=1, keepdims=True)


def export_predictions(checkpoint: Checkpoint, manifest_path, split: str,
                       out_path, data_root=None) -> int:
    """Write one prediction table for `split`; returns the row count."""
    dataset = read_manifest(manifest_path)
    if tuple(dataset.classes) != tuple(checkpoint.classes):
        raise DataError(
            f"checkpoint classes {checkpoint.classes} do not match manifest "
            f"classes {dataset.classes}"
        )
    config = checkpoint.config
    ids, pixels, _ = split_tensor(
        dataset, split, config.input_size, config.toy, data_root
    )
    probs = predict_scores(checkpoint, pixels)

    lines = [f"# model_id={checkpoint.model_id}"]
    lines.append(",".join(["sample_id"] + [f"score_{c}" for c in dataset.classes]))
    for sample_id, row in zip(ids, probs):
        lines.append(",".join([sample_id] + [repr(float(v)) for v in row]))
    try:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write predictions '{out_path}': {exc}") from exc
    return len(ids)
