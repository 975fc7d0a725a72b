"""Shared builders for manifests and prediction tables used across tests."""
from __future__ import annotations

import numpy as np

from ensemblekit.manifest import DEFAULT_CLASSES, Manifest, SampleRecord
from ensemblekit.predictions import PredictionTable


def make_records(count, label, prefix, split=None):
    return [
        SampleRecord(
            sample_id=f"{prefix}{i:05d}",
            path=f"{prefix}{i:05d}.png",
            class_label=label,
            split=split,
        )
        for i in range(count)
    ]


def two_class_manifest(n_benign, n_malignant, split=None):
    """Unsplit (or single-split) manifest with benign/malignant counts."""
    records = make_records(n_benign, 0, "b", split) + make_records(n_malignant, 1, "m", split)
    return Manifest(classes=DEFAULT_CLASSES, records=tuple(records))


def split_manifest(counts):
    """Manifest from {split: (n_benign, n_malignant)}."""
    records = []
    for split, (nb, nm) in counts.items():
        records += make_records(nb, 0, f"b_{split}_", split)
        records += make_records(nm, 1, f"m_{split}_", split)
    return Manifest(classes=DEFAULT_CLASSES, records=tuple(records))


def random_scores(rng, n_samples, n_classes=2):
    """Row-stochastic score matrix."""
    raw = rng.random((n_samples, n_classes)) + 1e-9
    return raw / raw.sum(axis=1, keepdims=True)


def random_table(rng, model_id, sample_ids, n_classes=2):
    scores = random_scores(rng, len(sample_ids), n_classes)
    return PredictionTable(
        model_id=model_id,
        classes=DEFAULT_CLASSES if n_classes == 2 else tuple(f"c{j}" for j in range(n_classes)),
        rows={sid: scores[i] for i, sid in enumerate(sample_ids)},
    )


def one_hot_table(model_id, sample_ids, labels, classes=DEFAULT_CLASSES):
    rows = {}
    for sid, label in zip(sample_ids, labels):
        vec = np.zeros(len(classes))
        vec[label] = 1.0
        rows[sid] = vec
    return PredictionTable(model_id=model_id, classes=classes, rows=rows)


def random_score_tensor(rng, n_models, n_samples, n_classes=2):
    """(n_models, n_samples, n_classes) stack of row-stochastic matrices."""
    return np.stack([random_scores(rng, n_samples, n_classes) for _ in range(n_models)])
