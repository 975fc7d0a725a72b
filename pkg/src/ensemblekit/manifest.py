"""Dataset inventories: sample records, manifest CSV I/O, stratified splitting.

A manifest is metadata only; no image pixels are read here.  Split
assignment uses largest-remainder apportionment per class so that split
counts are a deterministic function of (class size, ratios), with the
seed controlling membership only.
"""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import StorageError, ValidationError

SPLITS = ("train", "val", "test")
PROVENANCES = ("original", "hflip", "vflip")
MAGNIFICATIONS = ("40X", "100X", "200X", "400X")
DEFAULT_CLASSES = ("benign", "malignant")

MANIFEST_HEADER = (
    "sample_id",
    "path",
    "class",
    "magnification",
    "patient_id",
    "subtype",
    "split",
    "provenance",
    "parent_id",
)


@dataclass(frozen=True)
class SampleRecord:
    """One labeled sample.  `class_label` indexes the manifest's class list."""

    sample_id: str
    path: str
    class_label: int
    magnification: str | None = None
    patient_id: str | None = None
    subtype: str | None = None
    split: str | None = None
    provenance: str = "original"
    parent_id: str | None = None

    def __post_init__(self):
        if not self.sample_id:
            raise ValidationError("sample_id must be non-empty")
        if self.class_label < 0:
            raise ValidationError(f"negative class_label for sample '{self.sample_id}'")
        if self.magnification is not None and self.magnification not in MAGNIFICATIONS:
            raise ValidationError(
                f"sample '{self.sample_id}': magnification must be one of "
                f"{MAGNIFICATIONS}, got '{self.magnification}'"
            )
        if self.split is not None and self.split not in SPLITS:
            raise ValidationError(
                f"sample '{self.sample_id}': split must be one of {SPLITS}, got '{self.split}'"
            )
        if self.provenance not in PROVENANCES:
            raise ValidationError(
                f"sample '{self.sample_id}': provenance must be one of {PROVENANCES}, "
                f"got '{self.provenance}'"
            )
        if (self.provenance != "original") != (self.parent_id is not None):
            raise ValidationError(
                f"sample '{self.sample_id}': parent_id must be set iff provenance is not original"
            )


@dataclass(frozen=True)
class Manifest:
    classes: tuple[str, ...]
    records: tuple[SampleRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "records", tuple(self.records))
        if len(self.classes) < 2:
            raise ValidationError("manifest needs at least 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise ValidationError("class names must be unique")

        seen: dict[str, SampleRecord] = {}
        for rec in self.records:
            if rec.sample_id in seen:
                raise ValidationError(f"duplicate sample_id '{rec.sample_id}'")
            seen[rec.sample_id] = rec
            if rec.class_label >= len(self.classes):
                raise ValidationError(
                    f"sample '{rec.sample_id}': class_label {rec.class_label} out of range "
                    f"for {len(self.classes)} classes"
                )
        for rec in self.records:
            if rec.provenance != "original":
                parent = seen.get(rec.parent_id)
                if parent is None:
                    raise ValidationError(
                        f"sample '{rec.sample_id}': parent_id '{rec.parent_id}' not in manifest"
                    )
                if parent.provenance != "original":
                    raise ValidationError(
                        f"sample '{rec.sample_id}': parent '{rec.parent_id}' is not an original record"
                    )
        with_split = sum(1 for rec in self.records if rec.split is not None)
        if with_split not in (0, len(self.records)):
            raise ValidationError(
                f"manifest must be fully split or fully unsplit "
                f"({with_split} of {len(self.records)} records have a split)"
            )

    @property
    def is_split(self) -> bool:
        return bool(self.records) and self.records[0].split is not None

    def index(self) -> dict[str, SampleRecord]:
        return {rec.sample_id: rec for rec in self.records}

    def split_records(self, split: str) -> list[SampleRecord]:
        if split not in SPLITS:
            raise ValidationError(f"split must be one of {SPLITS}, got '{split}'")
        return [rec for rec in self.records if rec.split == split]

    def class_counts(self, split: str | None = None) -> list[int]:
        """Per-class record counts, optionally restricted to one split."""
        counts = [0] * len(self.classes)
        for rec in self.records:
            if split is None or rec.split == split:
                counts[rec.class_label] += 1
        return counts


@dataclass(frozen=True)
class SplitRatios:
    """Exact train/val/test proportions.  Must sum to 1 as rationals."""

    train: Fraction
    val: Fraction
    test: Fraction

    def __post_init__(self):
        for name in ("train", "val", "test"):
            value = getattr(self, name)
            if not isinstance(value, Fraction):
                object.__setattr__(self, name, Fraction(value))
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} ratio must be non-negative")
        if self.train + self.val + self.test != 1:
            raise ValidationError(
                f"ratios must sum to 1 exactly, got {self.train + self.val + self.test}"
            )

    @classmethod
    def parse(cls, text: str) -> "SplitRatios":
        """Parse 'a:b:c' (e.g. '7:1:2') into normalized exact ratios."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"ratios must be 'train:val:test', got '{text}'")
        try:
            values = [Fraction(p.strip()) for p in parts]
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"cannot parse ratios '{text}': {exc}") from None
        total = sum(values)
        if total <= 0 or any(v < 0 for v in values):
            raise ValidationError(f"ratios must be non-negative with a positive sum, got '{text}'")
        return cls(values[0] / total, values[1] / total, values[2] / total)


def largest_remainder_quotas(n: int, ratios: SplitRatios) -> tuple[int, int, int]:
    """Apportion n items to (train, val, test) by largest remainder.

    Fractional-remainder ties go to train first, then val.
    """
    shares = [ratios.train * n, ratios.val * n, ratios.test * n]
    floors = [int(s) for s in shares]
    remainders = [s - f for s, f in zip(shares, floors)]
    leftover = n - sum(floors)
    for i in sorted(range(3), key=lambda i: (-remainders[i], i))[:leftover]:
        floors[i] += 1
    return floors[0], floors[1], floors[2]


def stratified_split(manifest: Manifest, ratios: SplitRatios, seed: int) -> Manifest:
    """Assign every record to train/val/test, stratified per class.

    Within each class the split sizes are the largest-remainder quotas of
    the class size; membership comes from a seeded shuffle.  Counts are
    therefore identical for every seed.
    """
    if manifest.is_split:
        raise ValidationError("manifest already has split assignments")
    for rec in manifest.records:
        if rec.provenance != "original":
            raise ValidationError(
                f"stratified_split requires original records only ('{rec.sample_id}' is "
                f"{rec.provenance})"
            )

    per_class: list[list[SampleRecord]] = [[] for _ in manifest.classes]
    for rec in manifest.records:
        per_class[rec.class_label].append(rec)
    for label, recs in enumerate(per_class):
        if not recs:
            raise ValidationError(f"class '{manifest.classes[label]}' has no records")

    rng = random.Random(seed)
    assignment: dict[str, str] = {}
    for recs in per_class:
        ordered = sorted(recs, key=lambda r: r.sample_id)
        rng.shuffle(ordered)
        quotas = largest_remainder_quotas(len(ordered), ratios)
        start = 0
        for split_name, quota in zip(SPLITS, quotas):
            for rec in ordered[start : start + quota]:
                assignment[rec.sample_id] = split_name
            start += quota

    new_records = [replace(rec, split=assignment[rec.sample_id]) for rec in manifest.records]
    return Manifest(classes=manifest.classes, records=tuple(new_records))


def _normalize_magnification(raw: str) -> str:
    text = raw.strip().upper().replace("×", "X")
    if not text.endswith("X"):
        text += "X"
    return text


def _optional(field: str) -> str | None:
    return field if field else None


def load_manifest(path, classes=None) -> Manifest:
    """Read a manifest CSV (see MANIFEST_HEADER for the column layout).

    When `classes` is omitted the vocabulary defaults to
    ("benign", "malignant") if only those names appear, otherwise the
    sorted set of observed names.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: empty manifest file") from None
            if tuple(header) != MANIFEST_HEADER:
                raise ValidationError(
                    f"{path}: line 1: bad header, expected {','.join(MANIFEST_HEADER)}"
                )
            raw_rows = []
            for row in reader:
                if not row:
                    continue
                if len(row) != len(MANIFEST_HEADER):
                    raise ValidationError(
                        f"{path}: line {reader.line_num}: expected {len(MANIFEST_HEADER)} "
                        f"fields, got {len(row)}"
                    )
                raw_rows.append((reader.line_num, row))
    except OSError as exc:
        raise StorageError(f"cannot read manifest '{path}': {exc}") from exc

    if classes is None:
        observed = {row[2] for _, row in raw_rows}
        if observed <= set(DEFAULT_CLASSES):
            classes = DEFAULT_CLASSES
        elif len(observed) >= 2:
            classes = tuple(sorted(observed))
        else:
            raise ValidationError(
                f"{path}: cannot infer a class vocabulary from {sorted(observed)}; "
                f"pass one explicitly"
            )
    class_index = {name: i for i, name in enumerate(classes)}

    records = []
    seen_ids = set()
    for line_num, row in raw_rows:
        sample_id, rel_path, class_name = row[0], row[1], row[2]
        if sample_id in seen_ids:
            raise ValidationError(f"{path}: line {line_num}: duplicate sample_id '{sample_id}'")
        seen_ids.add(sample_id)
        if class_name not in class_index:
            raise ValidationError(
                f"{path}: line {line_num}: unknown class name '{class_name}'"
            )
        magnification = _optional(row[3])
        if magnification is not None:
            magnification = _normalize_magnification(magnification)
        try:
            records.append(
                SampleRecord(
                    sample_id=sample_id,
                    path=rel_path,
                    class_label=class_index[class_name],
                    magnification=magnification,
                    patient_id=_optional(row[4]),
                    subtype=_optional(row[5]),
                    split=_optional(row[6]),
                    provenance=row[7] if row[7] else "original",
                    parent_id=_optional(row[8]),
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"{path}: line {line_num}: {exc}") from None
    return Manifest(classes=tuple(classes), records=tuple(records))


def save_manifest(manifest: Manifest, path) -> None:
    """Write a manifest CSV with LF line endings and empty optional fields."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MANIFEST_HEADER)
            for rec in manifest.records:
                writer.writerow(
                    [
                        rec.sample_id,
                        rec.path,
                        manifest.classes[rec.class_label],
                        rec.magnification or "",
                        rec.patient_id or "",
                        rec.subtype or "",
                        rec.split or "",
                        rec.provenance,
                        rec.parent_id or "",
                    ]
                )
    except OSError as exc:
        raise StorageError(f"cannot write manifest '{path}': {exc}") from exc
