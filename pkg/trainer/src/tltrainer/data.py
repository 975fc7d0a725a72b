"""Manifest access and the synthetic toy dataset.

The manifest CSV layout is a file contract shared with the downstream
ensembling tools, so the column names here must not drift:

    sample_id,path,class,magnification,patient_id,subtype,split,provenance,parent_id

Optional columns may be empty.  This module reads just the fields training
needs and never imports the downstream package; the file format is the
interface.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DataError

MANIFEST_COLUMNS = (
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

SPLITS = ("train", "val", "test")

# Matches the downstream default vocabulary so that inferred class order
# agrees on both sides of the file contract.
DEFAULT_CLASSES = ("benign", "malignant")


@dataclass(frozen=True)
class Sample:
    sample_id: str
    path: str
    class_name: str
    split: str


@dataclass(frozen=True)
class Dataset:
    """Samples grouped by split, plus the shared class vocabulary."""

    classes: tuple
    samples: tuple

    def split(self, name: str) -> list:
        if name not in SPLITS:
            raise DataError(f"unknown split '{name}'")
        return [s for s in self.samples if s.split == name]

    def class_index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise DataError(f"unknown class name '{name}'") from None


def read_manifest(path) -> Dataset:
    """Load the sample table, requiring every row to carry a split.

    Class order follows the same inference rule the downstream reader uses:
    the benign/malignant pair keeps its conventional order, anything else is
    sorted.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty manifest file") from None
            if tuple(header) != MANIFEST_COLUMNS:
                raise DataError(
                    f"{path}: line 1: bad header, expected "
                    f"{','.join(MANIFEST_COLUMNS)}"
                )
            rows = []
            for row in reader:
                if not row:
                    continue
                if len(row) != len(MANIFEST_COLUMNS):
                    raise DataError(
                        f"{path}: line {reader.line_num}: expected "
                        f"{len(MANIFEST_COLUMNS)} fields, got {len(row)}"
                    )
                rows.append((reader.line_num, row))
    except OSError as exc:
        raise DataError(f"cannot read manifest '{path}': {exc}") from exc

    samples = []
    seen = set()
    for line_num, row in rows:
        sample_id, rel_path, class_name, split = row[0], row[1], row[2], row[6]
        if sample_id in seen:
            raise DataError(f"{path}: line {line_num}: duplicate sample_id '{sample_id}'")
        seen.add(sample_id)
        if split not in SPLITS:
            raise DataError(
                f"{path}: line {line_num}: sample '{sample_id}' has no usable "
                f"split (got '{split}'); training needs a fully split manifest"
            )
        samples.append(Sample(sample_id, rel_path, class_name, split))

    observed = {s.class_name for s in samples}
    if observed <= set(DEFAULT_CLASSES) and len(observed) >= 1:
        classes = DEFAULT_CLASSES
    elif len(observed) >= 2:
        classes = tuple(sorted(observed))
    else:
        raise DataError(f"{path}: cannot infer a class vocabulary from {sorted(observed)}")
    if len(samples) == 0:
        raise DataError(f"{path}: manifest has no samples")
    return Dataset(classes=classes, samples=tuple(samples))


def _toy_rng(sample_id: str) -> np.random.Generator:
    # crc32 keeps the per-sample stream stable across processes, unlike hash().
    return np.random.default_rng(zlib.crc32(sample_id.encode("utf-8")))


def toy_pixels(sample_id: str, class_index: int, size: int) -> np.ndarray:
    """Deterministic synthetic image, shape (3, size, size), values in [0, 1].

    Class 0 brightens the top-left quadrant, class 1 the bottom-right, on top
    of per-sample noise.  Separable, but noisy enough that a model has to
    actually learn the rule.
    """
    rng = _toy_rng(sample_id)
    img = rng.uniform(0.0, 0.45, size=(3, size, size)).astype(np.float32)
    half = size // 2
    if class_index == 0:
        img[:, :half, :half] += 0.5
    else:
        img[:, half:, half:] += 0.5
    return np.clip(img, 0.0, 1.0)


def load_pixels(sample: Sample, class_index: int, size: int, toy: bool,
                root=None) -> np.ndarray:
    """Pixels for one sample: synthesized in toy mode, read from disk otherwise."""
    if toy:
        return toy_pixels(sample.sample_id, class_index, size)
    path = sample.path if root is None else f"{root}/{sample.path}"
    try:
        with Image.open(path) as im:
            im = im.convert("RGB").resize((size, size), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except OSError as exc:
        raise DataError(f"cannot read image for sample '{sample.sample_id}': {exc}") from exc
    return np.transpose(arr, (2, 0, 1))


def split_tensor(dataset: Dataset, split: str, size: int, toy: bool, root=None):
    """(ids, pixels, labels) for one split, ordered by sample_id.

    The fixed order makes every downstream computation on the tensors
    reproducible run to run.
    """
    samples = sorted(dataset.split(split), key=lambda s: s.sample_id)
    if not samples:
        raise DataError(f"split '{split}' is empty")
    ids = [s.sample_id for s in samples]
    labels = np.array([dataset.class_index(s.class_name) for s in samples], dtype=np.int64)
    pixels = np.stack(
        [load_pixels(s, int(l), size, toy, root) for s, l in zip(samples, labels)]
    )
    return ids, pixels, labels


def write_toy_manifest(path, n_samples: int = 64, seed: int = 0) -> None:
    """Emit a balanced two-class manifest with deterministic splits.

    Per class: 70% train, 10% val, the rest test, each split non-empty.
    Rows carry only the columns training and export need; the optional ones
    stay blank.
    """
    if n_samples < 20 or n_samples % 2 != 0:
        raise DataError(
            f"n_samples must be an even number >= 20 so every split is "
            f"populated for both classes, got {n_samples}"
        )
    per_class = n_samples // 2
    n_train = (7 * per_class) // 10
    n_val = max(1, per_class // 10)
    n_test = per_class - n_train - n_val
    if n_test < 1:
        raise DataError(f"n_samples={n_samples} leaves an empty test split")

    rows = []
    for class_name in DEFAULT_CLASSES:
        for i in range(per_class):
            if i < n_train:
                split = "train"
            elif i < n_train + n_val:
                split = "val"
            else:
                split = "test"
            sample_id = f"{class_name}_{seed:02d}_{i:04d}"
            rows.append(
                [sample_id, f"images/{sample_id}.png", class_name,
                 "", "", "", split, "original", ""]
            )
    rows.sort(key=lambda r: r[0])
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MANIFEST_COLUMNS)
            writer.writerows(rows)
    except OSError as exc:
        raise DataError(f"cannot write manifest '{path}': {exc}") from exc
