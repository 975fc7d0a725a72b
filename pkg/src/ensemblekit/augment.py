"""Flip-based class balancing: plan the flips per split, then execute them.

Balancing happens after splitting and independently within each split, so
a flipped copy always stays in its parent's split.  Horizontal flips of
every minority original come first; vertical flips top up the remainder.
"""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass, replace
from pathlib import Path

from PIL import Image, UnidentifiedImageError

from .errors import StorageError, ValidationError
from .manifest import SPLITS, Manifest, SampleRecord

TRANSFORMS = ("hflip", "vflip")
_AXIS_FOR_TRANSFORM = {"hflip": "horizontal", "vflip": "vertical"}

PLAN_HEADER = ("parent_id", "transform", "new_sample_id", "split")


@dataclass(frozen=True)
class PlanEntry:
    parent_id: str
    transform: str
    new_sample_id: str
    split: str

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValidationError(f"transform must be one of {TRANSFORMS}, got '{self.transform}'")
        if self.split not in SPLITS:
            raise ValidationError(f"split must be one of {SPLITS}, got '{self.split}'")


@dataclass(frozen=True)
class AugmentationPlan:
    entries: tuple[PlanEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for entry in self.entries:
            key = (entry.parent_id, entry.transform)
            if key in seen:
                raise ValidationError(f"duplicate plan entry for {key}")
            seen.add(key)

    def counts(self) -> dict[tuple[str, str], int]:
        """Entry counts keyed by (split, transform)."""
        out: dict[tuple[str, str], int] = {}
        for entry in self.entries:
            key = (entry.split, entry.transform)
            out[key] = out.get(key, 0) + 1
        return out


def plan_balance(manifest: Manifest, seed: int) -> AugmentationPlan:
    """Plan flips so both classes have equal counts in every split.

    Per split with minority count n and majority count N: all-hflip-first,
    then a seeded selection of N - 2n vflips (when N < 2n, a seeded
    selection of N - n hflips suffices on its own).  Requires N <= 3n;
    beyond that, flips alone cannot balance the split.
    """
    if len(manifest.classes) != 2:
        raise ValidationError(
            f"plan_balance supports exactly two classes, got {len(manifest.classes)}"
        )
    if not manifest.records or not manifest.is_split:
        raise ValidationError("plan_balance requires a fully split manifest")
    for rec in manifest.records:
        if rec.provenance != "original":
            raise ValidationError(
                f"plan_balance requires original records only ('{rec.sample_id}' is "
                f"{rec.provenance})"
            )

    existing_ids = {rec.sample_id for rec in manifest.records}
    rng = random.Random(seed)
    entries: list[PlanEntry] = []

    for split in SPLITS:
        split_records = manifest.split_records(split)
        if not split_records:
            continue
        counts = [0, 0]
        for rec in split_records:
            counts[rec.class_label] += 1
        if counts[0] == counts[1]:
            continue
        minority_label = 0 if counts[0] < counts[1] else 1
        n = counts[minority_label]
        big = counts[1 - minority_label]
        if n == 0:
            raise ValidationError(f"split '{split}' has no '{manifest.classes[minority_label]}' records")
        if big > 3 * n:
            raise ValidationError(
                f"split '{split}': majority {big} exceeds 3x minority {n}; flips cannot "
                f"balance it, supply another strategy"
            )
        pool = sorted(
            (rec for rec in split_records if rec.class_label == minority_label),
            key=lambda r: r.sample_id,
        )
        deficit = big - n
        n_hflip = min(n, deficit)
        n_vflip = deficit - n_hflip

        hflip_parents = pool if n_hflip == n else sorted(
            rng.sample(pool, n_hflip), key=lambda r: r.sample_id
        )
        vflip_parents = sorted(rng.sample(pool, n_vflip), key=lambda r: r.sample_id)

        for transform, parents in (("hflip", hflip_parents), ("vflip", vflip_parents)):
            for parent in parents:
                new_id = f"{parent.sample_id}__{transform}"
                if new_id in existing_ids:
                    raise ValidationError(
                        f"generated sample_id '{new_id}' collides with an existing record"
                    )
                entries.append(
                    PlanEntry(
                        parent_id=parent.sample_id,
                        transform=transform,
                        new_sample_id=new_id,
                        split=split,
                    )
                )
    return AugmentationPlan(entries=tuple(entries))


def apply_flip(image: Image.Image, axis: str) -> Image.Image:
    """Mirror an image: pixel (x, y) -> (W-1-x, y) horizontally, (x, H-1-y) vertically."""
    if axis == "horizontal":
        return image.transpose(Image.Transpose.FLIP_LEFT_RIGHT)
    if axis == "vertical":
        return image.transpose(Image.Transpose.FLIP_TOP_BOTTOM)
    raise ValidationError(f"axis must be 'horizontal' or 'vertical', got '{axis}'")


def _derived_path(parent_path: str, transform: str) -> str:
    p = Path(parent_path)
    return str(p.with_name(f"{p.stem}__{transform}{p.suffix}"))


def execute_plan(plan: AugmentationPlan, manifest: Manifest, src_dir, dst_dir) -> Manifest:
    """Write every planned flip to dst_dir and return the augmented manifest.

    All inputs are checked before the first file is written; a failure
    mid-write reports the files already produced.
    """
    src_dir = Path(src_dir)
    dst_dir = Path(dst_dir)
    by_id = manifest.index()

    for entry in plan.entries:
        parent = by_id.get(entry.parent_id)
        if parent is None:
            raise ValidationError(f"plan references unknown parent '{entry.parent_id}'")
        if parent.split != entry.split:
            raise ValidationError(
                f"plan entry '{entry.new_sample_id}' split '{entry.split}' does not match "
                f"parent split '{parent.split}'"
            )
        if entry.new_sample_id in by_id:
            raise ValidationError(
                f"plan entry '{entry.new_sample_id}' collides with an existing record"
            )
        src = src_dir / parent.path
        if not src.is_file():
            raise StorageError(f"missing source file '{src}'")

    written: list[str] = []
    new_records: list[SampleRecord] = []
    for entry in plan.entries:
        parent = by_id[entry.parent_id]
        src = src_dir / parent.path
        rel_out = _derived_path(parent.path, entry.transform)
        dst = dst_dir / rel_out
        try:
            with Image.open(src) as image:
                flipped = apply_flip(image, _AXIS_FOR_TRANSFORM[entry.transform])
                dst.parent.mkdir(parents=True, exist_ok=True)
                flipped.save(dst)
        except UnidentifiedImageError:
            raise StorageError(
                f"cannot decode image '{src}' (wrote {len(written)} files before failing: "
                f"{written})"
            ) from None
        except OSError as exc:
            raise StorageError(
                f"failed on '{dst}': {exc} (wrote {len(written)} files before failing: "
                f"{written})"
            ) from exc
        written.append(str(dst))
        new_records.append(
            replace(
                parent,
                sample_id=entry.new_sample_id,
                path=rel_out,
                provenance=entry.transform,
                parent_id=entry.parent_id,
            )
        )

    new_records.sort(key=lambda r: r.sample_id)
    return Manifest(classes=manifest.classes, records=manifest.records + tuple(new_records))


def load_plan(path) -> AugmentationPlan:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: empty plan file") from None
            if tuple(header) != PLAN_HEADER:
                raise ValidationError(f"{path}: line 1: bad header, expected {','.join(PLAN_HEADER)}")
            entries = []
            for row in reader:
                if not row:
                    continue
                if len(row) != len(PLAN_HEADER):
                    raise ValidationError(
                        f"{path}: line {reader.line_num}: expected {len(PLAN_HEADER)} fields, "
                        f"got {len(row)}"
                    )
                try:
                    entries.append(PlanEntry(*row))
                except ValidationError as exc:
                    raise ValidationError(f"{path}: line {reader.line_num}: {exc}") from None
    except OSError as exc:
        raise StorageError(f"cannot read plan '{path}': {exc}") from exc
    return AugmentationPlan(entries=tuple(entries))


def save_plan(plan: AugmentationPlan, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(PLAN_HEADER)
            for entry in plan.entries:
                writer.writerow([entry.parent_id, entry.transform, entry.new_sample_id, entry.split])
    except OSError as exc:
        raise StorageError(f"cannot write plan '{path}': {exc}") from exc
