"""Confusion-matrix metrics and ranking quality.

Convention: `counts[p][t]` counts samples with output class p and target
class t, i.e. rows are what the classifier said, columns are the truth.
Class 0 is the positive class for the binary summary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray  # [output, target]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if counts.shape != (k, k):
            raise ValidationError(f"counts must be {k}x{k}, got {counts.shape}")
        if np.any(counts < 0):
            raise ValidationError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(outputs, targets, classes) -> ConfusionMatrix:
    """Tally predictions into a [output, target] count matrix.

    Abstentions (output < 0) are excluded from the tally.
    """
    outputs = np.asarray(outputs, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if outputs.shape != targets.shape:
        raise ValidationError("outputs and targets must have the same length")
    k = len(classes)
    if np.any(targets < 0) or np.any(targets >= k):
        raise ValidationError("target class index out of range")
    if np.any(outputs >= k):
        raise ValidationError("output class index out of range")
    decided = outputs >= 0
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (outputs[decided], targets[decided]), 1)
    return ConfusionMatrix(classes=tuple(classes), counts=counts)


def accuracy(cm: ConfusionMatrix) -> float | None:
    """Diagonal fraction; None when the matrix is empty."""
    if cm.total == 0:
        return None
    return float(np.trace(cm.counts)) / cm.total


def precision(cm: ConfusionMatrix, class_index: int) -> float | None:
    """TP over row sum (everything the classifier labelled `class_index`)."""
    row = cm.counts[class_index]
    denom = int(row.sum())
    if denom == 0:
        return None
    return int(row[class_index]) / denom


def recall(cm: ConfusionMatrix, class_index: int) -> float | None:
    """TP over column sum (everything that truly is `class_index`)."""
    col = cm.counts[:, class_index]
    denom = int(col.sum())
    if denom == 0:
        return None
    return int(col[class_index]) / denom


def f_beta(cm: ConfusionMatrix, class_index: int, beta: float = 1.0) -> float | None:
    """Weighted harmonic mean of precision and recall.

    beta > 1 favours recall, beta < 1 favours precision.  None when either
    component is undefined or both are zero.
    """
    if beta <= 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    p = precision(cm, class_index)
    r = recall(cm, class_index)
    if p is None or r is None:
        return None
    denom = beta * beta * p + r
    if denom == 0:
        return None
    return (1 + beta * beta) * p * r / denom


def classification_report(cm: ConfusionMatrix, beta: float = 1.0) -> dict:
    """Accuracy plus per-class precision/recall/F1 (and F_beta if beta != 1)."""
    per_class = {}
    for j, name in enumerate(cm.classes):
        entry = {
            "precision": precision(cm, j),
            "recall": recall(cm, j),
            "f1": f_beta(cm, j, 1.0),
        }
        if beta != 1.0:
            entry[f"f_beta({beta:g})"] = f_beta(cm, j, beta)
        per_class[name] = entry
    return {
        "accuracy": accuracy(cm),
        "per_class": per_class,
        "support": int(cm.total),
    }


def average_precision(scores, relevant, sample_ids=None) -> float:
    """AP of a ranking: mean of precision-at-t over the relevant positions.

    Ranks by descending score; ties break by ascending sample_id so the
    ranking is total and reproducible.  N is the number of relevant items.
    """
    scores = np.asarray(scores, dtype=np.float64)
    relevant = np.asarray(relevant, dtype=bool)
    if scores.shape != relevant.shape or scores.ndim != 1:
        raise ValidationError("scores and relevant must be 1-d arrays of equal length")
    n_rel = int(relevant.sum())
    if n_rel == 0:
        raise ValidationError("average_precision is undefined with no relevant items")
    if sample_ids is None:
        sample_ids = [str(i) for i in range(len(scores))]
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], sample_ids[i]))
    rel_ranked = relevant[order]
    cum_rel = np.cumsum(rel_ranked)
    ranks = np.arange(1, len(scores) + 1)
    precision_at = cum_rel / ranks
    # left-to-right sum, so the result is independent of numpy's pairwise
    # reduction blocking and reproducible against a plain-loop evaluation
    return sum(precision_at[rel_ranked].tolist()) / n_rel


def mean_average_precision(score_matrix, targets, sample_ids=None) -> float:
    """Unweighted mean of per-class AP.

    `score_matrix[s, j]` scores sample s for class j; every class must
    occur in `targets` at least once.
    """
    score_matrix = np.asarray(score_matrix, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if score_matrix.ndim != 2 or score_matrix.shape[0] != len(targets):
        raise ValidationError("score_matrix must be (n_samples, n_classes)")
    n_classes = score_matrix.shape[1]
    aps = []
    for j in range(n_classes):
        rel = targets == j
        if not rel.any():
            raise ValidationError(f"class {j} has no samples; its AP is undefined")
        aps.append(average_precision(score_matrix[:, j], rel, sample_ids))
    return float(sum(aps) / n_classes)
