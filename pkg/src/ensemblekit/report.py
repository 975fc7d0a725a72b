"""Report documents: canonical JSON plus a plain-text table render.

Documents are deterministic by construction (sorted keys, no timestamps)
so identical inputs and flags always produce byte-identical files.
"""
from __future__ import annotations

import hashlib
import json

import numpy as np

from . import metrics
from .errors import StorageError, ValidationError

SCHEMA = "ensemblekit-report/1"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for block in iter(lambda: fh.read(65536), b""):
                digest.update(block)
    except OSError as exc:
        raise StorageError(f"cannot read '{path}': {exc}") from exc
    return "sha256:" + digest.hexdigest()


def display(value) -> str | None:
    """4-decimal rendering; None stays None (metric was undefined)."""
    if value is None:
        return None
    return f"{value:.4f}"


def _with_display(tree):
    """Mirror a metrics dict, adding '<key>_display' next to each float."""
    out = {}
    for key, value in tree.items():
        if isinstance(value, dict):
            out[key] = _with_display(value)
        else:
            out[key] = value
            if isinstance(value, float) or value is None:
                out[f"{key}_display"] = display(value)
    return out


def model_metrics(cm, score_matrix=None, truth=None, sample_ids=None, beta: float = 1.0) -> dict:
    """Full metric block for one score table (or combined ensemble scores)."""
    doc = metrics.classification_report(cm, beta=beta)
    if score_matrix is not None:
        score_matrix = np.asarray(score_matrix, dtype=np.float64)
        per_class_ap = {}
        for j, name in enumerate(cm.classes):
            rel = np.asarray(truth) == j
            per_class_ap[name] = metrics.average_precision(score_matrix[:, j], rel, sample_ids)
        doc["ap"] = per_class_ap
        doc["map"] = metrics.mean_average_precision(score_matrix, truth, sample_ids)
    doc["confusion"] = {
        "classes": list(cm.classes),
        "layout": "counts[output][target]",
        "counts": cm.counts.tolist(),
    }
    return _with_display(doc)


def binary_summary(cm, positive_class: str) -> dict:
    """TP/FP/FN/TN of the two-class table, rows = output, columns = target."""
    if len(cm.classes) != 2:
        raise ValidationError("binary summary requires exactly 2 classes")
    if positive_class not in cm.classes:
        raise ValidationError(f"unknown positive class '{positive_class}'")
    p = cm.classes.index(positive_class)
    n = 1 - p
    c = cm.counts
    return {
        "positive_class": positive_class,
        "tp": int(c[p][p]),
        "fp": int(c[p][n]),
        "fn": int(c[n][p]),
        "tn": int(c[n][n]),
    }


def render_table(headers, rows) -> str:
    """Fixed-width text table; cells are pre-rendered strings."""
    cells = [list(headers)] + [[("" if c is None else str(c)) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = []
    for r, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write(doc: dict, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(dumps(doc))
    except OSError as exc:
        raise StorageError(f"cannot write report '{path}': {exc}") from exc


def load(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise StorageError(f"cannot read report '{path}': {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise ValidationError(f"{path}: not a {SCHEMA} document")
    return doc
