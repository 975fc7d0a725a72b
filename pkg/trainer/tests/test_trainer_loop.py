import math

import pytest
import torch

from tltrainer.config import toy_config
from tltrainer.data import write_toy_manifest
from tltrainer.errors import TrainingError
from tltrainer.model import backbone_fingerprint, build_model
from tltrainer.train import (
    Checkpoint,
    PlateauDecay,
    _run_epoch,
    load_checkpoint,
    save_checkpoint,
    train,
)


class TestPlateauDecay:
    def test_fires_exactly_on_fifth_flat_epoch(self):
        sched = PlateauDecay(patience=5, rate=0.1)
        assert not sched.step(0.5)
        fired = [sched.step(0.5) for _ in range(5)]
        assert fired == [False, False, False, False, True]
        assert sched.triggers == 1

    def test_streak_resets_after_firing(self):
        sched = PlateauDecay(patience=5, rate=0.1)
        sched.step(0.5)
        for _ in range(5):
            sched.step(0.5)
        # A fresh streak must take another full five epochs.
        fired = [sched.step(0.5) for _ in range(5)]
        assert fired == [False, False, False, False, True]
        assert sched.triggers == 2

    def test_improvement_resets_streak(self):
        sched = PlateauDecay(patience=3, rate=0.1)
        sched.step(0.5)
        assert not sched.step(0.4)
        assert not sched.step(0.4)
        assert not sched.step(0.6)  # improvement
        fired = [sched.step(0.6), sched.step(0.6), sched.step(0.6)]
        assert fired == [False, False, True]

    def test_equal_value_is_not_an_improvement(self):
        sched = PlateauDecay(patience=1, rate=0.1)
        sched.step(0.7)
        assert sched.step(0.7)

    def test_tracks_best_not_last(self):
        sched = PlateauDecay(patience=2, rate=0.1)
        sched.step(0.9)
        sched.step(0.1)  # streak 1
        assert sched.step(0.8)  # still below best -> streak 2 -> fire
        assert sched.best == 0.9


@pytest.fixture(scope="module")
def toy_manifest(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "manifest.csv"
    write_toy_manifest(path, n_samples=20, seed=0)
    return path


def quick_config(**overrides):
    defaults = dict(lr=0.01, epochs=4, batch_size=8, seed=3)
    defaults.update(overrides)
    return toy_config("toy-small", "quick", input_size=16, **defaults)


class TestTrain:
    def test_log_covers_every_epoch(self, toy_manifest):
        checkpoint = train(quick_config(), toy_manifest)
        assert [e["epoch"] for e in checkpoint.log] == [0, 1, 2, 3]
        for entry in checkpoint.log:
            assert math.isfinite(entry["train_loss"])
            assert 0.0 <= entry["train_accuracy"] <= 1.0
            assert 0.0 <= entry["val_accuracy"] <= 1.0

    def test_decay_applies_from_the_next_epoch(self, toy_manifest):
        # Patience 1 forces decays early so the lr column is easy to check.
        checkpoint = train(quick_config(epochs=6, lr_patience=1), toy_manifest)
        log = checkpoint.log
        for prev, cur in zip(log, log[1:]):
            if prev["lr_decayed"]:
                assert cur["lr"] == pytest.approx(prev["lr"] * 0.1)
            else:
                assert cur["lr"] == prev["lr"]

    def test_frozen_backbone_is_bit_identical(self, toy_manifest):
        config = quick_config()
        fresh = backbone_fingerprint(build_model(config, 2))
        checkpoint = train(config, toy_manifest)
        assert backbone_fingerprint(checkpoint.build()) == fresh

    def test_unfrozen_backbone_moves(self, toy_manifest):
        config = quick_config(freeze_backbone=False)
        fresh = backbone_fingerprint(build_model(config, 2))
        checkpoint = train(config, toy_manifest)
        assert backbone_fingerprint(checkpoint.build()) != fresh

    def test_training_is_reproducible(self, toy_manifest):
        a = train(quick_config(), toy_manifest)
        b = train(quick_config(), toy_manifest)
        assert a.log == b.log
        for key in a.state_dict:
            assert torch.equal(a.state_dict[key], b.state_dict[key])

    def test_seed_changes_the_outcome(self, toy_manifest):
        a = train(quick_config(seed=1), toy_manifest)
        b = train(quick_config(seed=2), toy_manifest)
        assert not torch.equal(a.state_dict["head.weight"], b.state_dict["head.weight"])

    def test_nonfinite_loss_aborts(self):
        config = quick_config()
        model = build_model(config, 2)
        with torch.no_grad():
            model.head.weight.fill_(float("nan"))
        optimizer = torch.optim.Adam(model.head.parameters(), lr=0.01)
        pixels = torch.zeros(4, 3, 16, 16)
        labels = torch.tensor([0, 1, 0, 1])
        with pytest.raises(TrainingError, match="non-finite"):
            _run_epoch(model, optimizer, pixels, labels, 2, 2, torch.arange(4))


class TestCheckpointIO:
    def test_round_trip(self, toy_manifest, tmp_path):
        checkpoint = train(quick_config(), toy_manifest)
        path = tmp_path / "model.pt"
        save_checkpoint(checkpoint, path)
        loaded = load_checkpoint(path)
        assert loaded.config == checkpoint.config
        assert loaded.classes == checkpoint.classes
        assert loaded.log == checkpoint.log
        for key in checkpoint.state_dict:
            assert torch.equal(loaded.state_dict[key], checkpoint.state_dict[key])
        assert isinstance(loaded, Checkpoint)

    def test_rejects_foreign_payload(self, tmp_path):
        path = tmp_path / "junk.pt"
        torch.save({"weights": 42}, path)
        with pytest.raises(TrainingError, match="checkpoint"):
            load_checkpoint(path)

    def test_rejects_garbage_file(self, tmp_path):
        path = tmp_path / "junk.pt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(TrainingError):
            load_checkpoint(path)
