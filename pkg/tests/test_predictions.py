import numpy as np
import pytest

from ensemblekit.errors import ValidationError
from ensemblekit.manifest import DEFAULT_CLASSES
from ensemblekit.predictions import (
    PredictionTable,
    align,
    load_predictions,
    save_predictions,
)
from helpers import one_hot_table, random_table, split_manifest


@pytest.fixture
def manifest():
    return split_manifest({"val": (3, 2), "test": (2, 2)})


def val_ids(manifest):
    return sorted(r.sample_id for r in manifest.split_records("val"))


class TestPredictionTable:
    def test_rows_become_float64_vectors(self):
        table = PredictionTable("m", DEFAULT_CLASSES, {"a": [0.25, 0.75]})
        assert table.rows["a"].dtype == np.float64

    def test_row_sum_tolerance(self):
        PredictionTable("m", DEFAULT_CLASSES, {"a": [0.5, 0.5 + 5e-7]})
        with pytest.raises(ValidationError, match="'a'"):
            PredictionTable("m", DEFAULT_CLASSES, {"a": [0.5, 0.5 + 5e-6]})

    def test_negative_score_rejected(self):
        with pytest.raises(ValidationError, match="negative"):
            PredictionTable("m", DEFAULT_CLASSES, {"a": [1.5, -0.5]})

    def test_wrong_width_rejected(self):
        with pytest.raises(ValidationError, match="expected 2"):
            PredictionTable("m", DEFAULT_CLASSES, {"a": [1.0]})


class TestPredictionsIO:
    def test_round_trip_exact(self, tmp_path, manifest):
        rng = np.random.default_rng(0)
        table = random_table(rng, "resnet", val_ids(manifest))
        path = tmp_path / "p.csv"
        save_predictions(table, path)
        loaded = load_predictions(path, manifest, "val")
        assert loaded.model_id == "resnet"
        for sid in table.rows:
            assert (loaded.rows[sid] == table.rows[sid]).all()

    def test_save_is_byte_stable(self, tmp_path, manifest):
        rng = np.random.default_rng(1)
        table = random_table(rng, "m", val_ids(manifest))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        save_predictions(table, a)
        save_predictions(load_predictions(a, manifest, "val"), b)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_metadata_line(self, tmp_path, manifest):
        path = tmp_path / "p.csv"
        path.write_text("sample_id,score_benign,score_malignant\n")
        with pytest.raises(ValidationError, match="model_id"):
            load_predictions(path, manifest, "val")

    def test_class_columns_must_match_manifest(self, tmp_path, manifest):
        path = tmp_path / "p.csv"
        path.write_text("# model_id=m\nsample_id,score_cat,score_dog\n")
        with pytest.raises(ValidationError, match="class columns"):
            load_predictions(path, manifest, "val")

    def test_unknown_sample_rejected_with_line(self, tmp_path, manifest):
        path = tmp_path / "p.csv"
        lines = ["# model_id=m", "sample_id,score_benign,score_malignant", "ghost,1.0,0.0"]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValidationError, match="line 3.*ghost"):
            load_predictions(path, manifest, "val")

    def test_missing_split_samples_listed(self, tmp_path, manifest):
        ids = val_ids(manifest)
        table = one_hot_table("m", ids[:-1], [0] * (len(ids) - 1))
        path = tmp_path / "p.csv"
        save_predictions(table, path)
        with pytest.raises(ValidationError, match=ids[-1]):
            load_predictions(path, manifest, "val")

    def test_rows_from_other_splits_dropped(self, tmp_path, manifest):
        all_ids = sorted(r.sample_id for r in manifest.records)
        table = one_hot_table("m", all_ids, [0] * len(all_ids))
        path = tmp_path / "p.csv"
        save_predictions(table, path)
        loaded = load_predictions(path, manifest, "val")
        assert sorted(loaded.rows) == val_ids(manifest)

    def test_duplicate_sample_rejected(self, tmp_path, manifest):
        sid = val_ids(manifest)[0]
        lines = [
            "# model_id=m",
            "sample_id,score_benign,score_malignant",
            f"{sid},1.0,0.0",
            f"{sid},0.0,1.0",
        ]
        path = tmp_path / "p.csv"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValidationError, match="duplicate"):
            load_predictions(path, manifest, "val")


class TestAlign:
    def test_scores_follow_sorted_sample_order(self, manifest):
        rng = np.random.default_rng(2)
        ids = val_ids(manifest)
        tables = [random_table(rng, f"m{i}", ids) for i in range(3)]
        aligned = align(tables, manifest, "val")
        assert aligned.sample_ids == tuple(ids)
        assert aligned.scores.shape == (3, 5, 2)
        for i, table in enumerate(tables):
            for s, sid in enumerate(ids):
                assert (aligned.scores[i, s] == table.rows[sid]).all()

    def test_truth_matches_manifest_labels(self, manifest):
        rng = np.random.default_rng(3)
        aligned = align([random_table(rng, "m", val_ids(manifest))], manifest, "val")
        by_id = manifest.index()
        expected = [by_id[sid].class_label for sid in aligned.sample_ids]
        assert aligned.truth.tolist() == expected

    def test_duplicate_model_ids_rejected(self, manifest):
        rng = np.random.default_rng(4)
        ids = val_ids(manifest)
        tables = [random_table(rng, "same", ids), random_table(rng, "same", ids)]
        with pytest.raises(ValidationError, match="same"):
            align(tables, manifest, "val")

    def test_coverage_disagreement_rejected(self, manifest):
        rng = np.random.default_rng(5)
        ids = val_ids(manifest)
        t1 = random_table(rng, "a", ids)
        t2 = random_table(rng, "b", ids[:-1] + ["m_test_00000"])
        with pytest.raises(ValidationError, match="coverage"):
            align([t1, t2], manifest, "val")

    def test_tables_must_cover_the_split(self, manifest):
        rng = np.random.default_rng(6)
        table = random_table(rng, "a", val_ids(manifest))
        with pytest.raises(ValidationError, match="test"):
            align([table], manifest, "test")
