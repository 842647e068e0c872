"""Training loop mechanics on downsized configurations."""

import dataclasses
import json

import pytest
import torch

from trainer.config import TrainConfig
from trainer.data import synthetic_dataset
from trainer.train import (
    BEST_NAME,
    HISTORY_NAME,
    LAST_NAME,
    hard_metrics,
    load_checkpoint,
    train,
    validation_miou,
)

SMALL = TrainConfig(input_size=32, encoder_channels=(8, 16),
                    bottleneck_channels=64, batch_size=4, max_epochs=5,
                    patience=10, seed=11)


def _small_sets():
    pairs = synthetic_dataset(seed=7, count=8, size=32)
    return pairs.subset(range(6)), pairs.subset(range(6, 8))


def test_hard_metrics_perfect_and_absent():
    labels = torch.tensor([[0, 1], [2, 0]])
    stats = hard_metrics(labels, labels)
    # class 3 is absent from both rasters and scores 1.0
    assert stats == {"accuracy": 1.0, "dice": 1.0, "mean_iou": 1.0}
    flipped = torch.tensor([[1, 0], [2, 0]])
    partial = hard_metrics(flipped, labels)
    assert partial["accuracy"] == pytest.approx(0.5)
    assert partial["mean_iou"] < 1.0


def test_loss_decreases_over_first_epochs(tmp_path):
    train_pairs, val_pairs = _small_sets()
    result = train(train_pairs, val_pairs, SMALL, tmp_path / "run")
    losses = [rec["train_step_loss"] for rec in result.history]
    assert len(losses) == 5
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_training_is_seed_deterministic(tmp_path):
    train_pairs, val_pairs = _small_sets()
    first = train(train_pairs, val_pairs, SMALL, tmp_path / "a")
    second = train(train_pairs, val_pairs, SMALL, tmp_path / "b")
    assert first.history == second.history
    assert (tmp_path / "a" / HISTORY_NAME).read_bytes() == \
        (tmp_path / "b" / HISTORY_NAME).read_bytes()


def test_history_file_layout(tmp_path):
    train_pairs, val_pairs = _small_sets()
    result = train(train_pairs, val_pairs, SMALL, tmp_path / "run")
    lines = (tmp_path / "run" / HISTORY_NAME).read_text().splitlines()
    meta = json.loads(lines[0])
    assert meta["optimizer"] == "adam"
    assert meta["checkpoint_metric"] == "val_mean_iou"
    assert meta["batch_size"] == 4
    assert meta["train_count"] == 6 and meta["val_count"] == 2
    assert len(lines) == 1 + len(result.history)
    record = json.loads(lines[1])
    for key in ("train_loss", "train_dice", "train_mean_iou",
                "val_loss", "val_dice", "val_mean_iou", "val_accuracy"):
        assert key in record


def test_early_stopping_on_plateau(tmp_path):
    # zero learning rate and no batchnorm freeze the model outright, so
    # the validation metric cannot improve after the first epoch
    config = dataclasses.replace(SMALL, learning_rate=0.0, use_batchnorm=False,
                                 patience=3, max_epochs=20)
    train_pairs, val_pairs = _small_sets()
    result = train(train_pairs, val_pairs, config, tmp_path / "run")
    assert result.stopped_reason == "early_stop"
    assert result.best_epoch == 1
    assert len(result.history) == 1 + config.patience
    mious = {rec["val_mean_iou"] for rec in result.history}
    assert len(mious) == 1


def test_best_checkpoint_reloads_to_recorded_miou(tmp_path):
    train_pairs, val_pairs = _small_sets()
    result = train(train_pairs, val_pairs, SMALL, tmp_path / "run")
    model, record = load_checkpoint(tmp_path / "run" / BEST_NAME)
    assert record["epoch"] == result.best_epoch
    assert record["val_mean_iou"] == pytest.approx(result.best_val_miou, abs=0)
    recomputed = validation_miou(model, val_pairs, SMALL)
    assert abs(recomputed - record["val_mean_iou"]) < 1e-6


def test_divergence_aborts_with_finite_checkpoint(tmp_path):
    # batchnorm renormalizes exploded activations, so the bounded loss
    # stays finite at any learning rate; divergence needs it off
    config = dataclasses.replace(SMALL, learning_rate=1e8, use_batchnorm=False)
    train_pairs, val_pairs = _small_sets()
    result = train(train_pairs, val_pairs, config, tmp_path / "run")
    assert result.diverged
    assert len(result.history) < config.max_epochs
    model, _ = load_checkpoint(tmp_path / "run" / LAST_NAME)
    assert all(torch.isfinite(p).all() for p in model.parameters())
    meta = json.loads(
        (tmp_path / "run" / HISTORY_NAME).read_text().splitlines()[0])
    assert meta["stopped_reason"] == "diverged"


def test_stop_on_train_dice_target(tmp_path):
    config = dataclasses.replace(SMALL, max_epochs=40)
    train_pairs, val_pairs = _small_sets()
    result = train(train_pairs, val_pairs, config, tmp_path / "run",
                   stop_train_dice=0.5)
    assert result.stopped_reason == "target_reached"
    assert result.history[-1]["train_dice"] >= 0.5
