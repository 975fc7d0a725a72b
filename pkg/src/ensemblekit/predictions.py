"""Per-classifier prediction-score tables and alignment against a manifest.

Scores are probabilities: every row must be non-negative and sum to 1
within 1e-6.  Callers exporting logits must softmax before writing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StorageError, ValidationError
from .manifest import SPLITS, Manifest

ROW_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class PredictionTable:
    """One classifier's per-sample class-score vectors."""

    model_id: str
    classes: tuple[str, ...]
    rows: dict[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.model_id:
            raise ValidationError("model_id must be non-empty")
        n_classes = len(self.classes)
        rows = {}
        for sample_id, scores in self.rows.items():
            vec = np.asarray(scores, dtype=np.float64)
            if vec.shape != (n_classes,):
                raise ValidationError(
                    f"table '{self.model_id}', sample '{sample_id}': expected {n_classes} "
                    f"scores, got {vec.shape}"
                )
            if np.any(vec < 0):
                raise ValidationError(
                    f"table '{self.model_id}', sample '{sample_id}': negative score"
                )
            total = float(vec.sum())
            if abs(total - 1.0) > ROW_SUM_TOLERANCE:
                raise ValidationError(
                    f"table '{self.model_id}', sample '{sample_id}': scores sum to "
                    f"{total!r}, outside 1 +/- {ROW_SUM_TOLERANCE}"
                )
            rows[sample_id] = vec
        object.__setattr__(self, "rows", rows)

    def sample_ids(self) -> list[str]:
        return sorted(self.rows)


@dataclass(frozen=True)
class AlignedPredictions:
    """Tables restricted to one split, in canonical (sorted sample_id) order.

    `scores[i, s, j]` is table i's score for class j on sample s.
    """

    tables: tuple[PredictionTable, ...]
    sample_ids: tuple[str, ...]
    truth: np.ndarray
    classes: tuple[str, ...]
    scores: np.ndarray = field(init=False)

    def __post_init__(self):
        stacked = np.stack(
            [
                np.stack([table.rows[sid] for sid in self.sample_ids])
                for table in self.tables
            ]
        )
        object.__setattr__(self, "scores", stacked)

    @property
    def n_models(self) -> int:
        return len(self.tables)

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    @property
    def model_ids(self) -> list[str]:
        return [table.model_id for table in self.tables]


def _parse_prediction_file(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise StorageError(f"cannot read predictions '{path}': {exc}") from exc
    if not lines or not lines[0].startswith("# model_id="):
        raise ValidationError(f"{path}: line 1: expected '# model_id=<id>' metadata line")
    model_id = lines[0][len("# model_id=") :].strip()
    if len(lines) < 2:
        raise ValidationError(f"{path}: missing header row")
    header = lines[1].split(",")
    if header[0] != "sample_id" or len(header) < 3:
        raise ValidationError(
            f"{path}: line 2: header must be 'sample_id,score_<class0>,score_<class1>,...'"
        )
    classes = []
    for col in header[1:]:
        if not col.startswith("score_"):
            raise ValidationError(f"{path}: line 2: bad score column '{col}'")
        classes.append(col[len("score_") :])
    raw_rows = []
    for i, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ValidationError(
                f"{path}: line {i}: expected {len(header)} fields, got {len(parts)}"
            )
        try:
            scores = [float(p) for p in parts[1:]]
        except ValueError:
            raise ValidationError(f"{path}: line {i}: non-numeric score") from None
        raw_rows.append((i, parts[0], scores))
    return model_id, tuple(classes), raw_rows


def load_predictions(path, manifest: Manifest, split: str) -> PredictionTable:
    """Load and validate one prediction file, restricted to `split`'s samples.

    Every file row must name a manifest sample; every sample of the split
    must be present.  Rows for other splits are dropped.
    """
    if split not in SPLITS:
        raise ValidationError(f"split must be one of {SPLITS}, got '{split}'")
    model_id, classes, raw_rows = _parse_prediction_file(path)
    if classes != tuple(manifest.classes):
        raise ValidationError(
            f"{path}: class columns {classes} do not match manifest classes "
            f"{tuple(manifest.classes)}"
        )
    by_id = manifest.index()
    expected = {rec.sample_id for rec in manifest.split_records(split)}
    if not expected:
        raise ValidationError(f"manifest has no samples in split '{split}'")

    rows = {}
    for line_num, sample_id, scores in raw_rows:
        rec = by_id.get(sample_id)
        if rec is None:
            raise ValidationError(f"{path}: line {line_num}: unknown sample_id '{sample_id}'")
        if sample_id in rows:
            raise ValidationError(f"{path}: line {line_num}: duplicate sample_id '{sample_id}'")
        if rec.split == split:
            rows[sample_id] = scores
    missing = expected - set(rows)
    if missing:
        shown = ", ".join(sorted(missing)[:5])
        raise ValidationError(
            f"{path}: missing {len(missing)} sample(s) of split '{split}': {shown}"
        )
    return PredictionTable(model_id=model_id, classes=tuple(manifest.classes), rows=rows)


def save_predictions(table: PredictionTable, path) -> None:
    """Write a prediction file with rows in canonical sorted-id order."""
    lines = [f"# model_id={table.model_id}"]
    lines.append(",".join(["sample_id"] + [f"score_{c}" for c in table.classes]))
    for sample_id in table.sample_ids():
        scores = table.rows[sample_id]
        lines.append(",".join([sample_id] + [repr(float(s)) for s in scores]))
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise StorageError(f"cannot write predictions '{path}': {exc}") from exc


def align(tables, manifest: Manifest, split: str) -> AlignedPredictions:
    """Stack validated tables over the split's canonical sample order."""
    tables = tuple(tables)
    if not tables:
        raise ValidationError("align requires at least one table")
    ids = [t.model_id for t in tables]
    if len(set(ids)) != len(ids):
        dup = sorted({m for m in ids if ids.count(m) > 1})
        raise ValidationError(f"duplicate model_id(s): {', '.join(dup)}")
    classes = tables[0].classes
    coverage = set(tables[0].rows)
    for table in tables[1:]:
        if table.classes != classes:
            raise ValidationError(
                f"tables '{tables[0].model_id}' and '{table.model_id}' disagree on class "
                f"vocabulary"
            )
        if set(table.rows) != coverage:
            raise ValidationError(
                f"tables '{tables[0].model_id}' and '{table.model_id}' disagree on sample "
                f"coverage"
            )
    if classes != tuple(manifest.classes):
        raise ValidationError("table classes do not match manifest classes")

    expected = {rec.sample_id for rec in manifest.split_records(split)}
    if coverage != expected:
        raise ValidationError(f"tables do not cover split '{split}' exactly")
    sample_ids = tuple(sorted(coverage))
    by_id = manifest.index()
    truth = np.array([by_id[sid].class_label for sid in sample_ids], dtype=np.int64)
    return AlignedPredictions(tables=tables, sample_ids=sample_ids, truth=truth, classes=classes)
