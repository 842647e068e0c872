"""Training loop: combined loss, epoch metrics, early stopping.

History goes to a JSONL file whose first line records the run setup.
The best checkpoint is picked by validation mean IoU; a rolling last
checkpoint is written every epoch so a divergence abort always leaves
the most recent finite state on disk.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .config import LossSettings, TrainConfig
from .data import NUM_CLASSES, TensorPairs
from .losses import combined_loss, one_hot
from .model import SpineUNet, build_model

BEST_NAME = "best.pt"
LAST_NAME = "last.pt"
HISTORY_NAME = "history.jsonl"


@dataclass
class TrainResult:
    history: list[dict]
    best_epoch: int
    best_val_miou: float
    stopped_reason: str
    out_dir: Path

    @property
    def diverged(self) -> bool:
        return self.stopped_reason == "diverged"


def hard_metrics(pred_labels: torch.Tensor, true_labels: torch.Tensor) -> dict:
    """Pixel accuracy plus mean dice and mean IoU over argmax predictions.

    Classes absent from both rasters score 1.0, matching the scorer the
    predictions are ultimately judged with.
    """
    pred = pred_labels.reshape(-1)
    true = true_labels.reshape(-1)
    accuracy = float((pred == true).float().mean())
    dices, ious = [], []
    for cls in range(NUM_CLASSES):
        p = pred == cls
        t = true == cls
        tp = float((p & t).sum())
        fp = float((p & ~t).sum())
        fn = float((~p & t).sum())
        if tp + fp + fn == 0.0:
            dices.append(1.0)
            ious.append(1.0)
        else:
            dices.append(2.0 * tp / (2.0 * tp + fp + fn))
            ious.append(tp / (tp + fp + fn))
    return {
        "accuracy": accuracy,
        "dice": sum(dices) / NUM_CLASSES,
        "mean_iou": sum(ious) / NUM_CLASSES,
    }


def _eval_split(model: SpineUNet, pairs: TensorPairs, settings: LossSettings,
                batch_size: int) -> dict:
    model.eval()
    losses = []
    preds = []
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            images = pairs.images[start:start + batch_size]
            masks = pairs.masks[start:start + batch_size]
            probs = model.probabilities(images)
            losses.append(float(combined_loss(probs, one_hot(masks), settings)))
            preds.append(probs.argmax(dim=-1))
    merged = torch.cat(preds)
    out = hard_metrics(merged, pairs.masks)
    out["loss"] = sum(losses) / len(losses)
    return out


def train(train_pairs: TensorPairs, val_pairs: TensorPairs, config: TrainConfig,
          out_dir, stop_train_dice: float | None = None) -> TrainResult:
    """Optimize the combined loss; returns history and checkpoint locations.

    Stops on the first of: max epochs, ``patience`` epochs without a new
    best validation mean IoU, the optional train-dice target, or a
    non-finite loss.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = build_model(config)
    shuffler = torch.Generator().manual_seed(config.seed + 0x5EED)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    settings = config.loss

    meta = {
        "optimizer": "adam",
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "max_epochs": config.max_epochs,
        "patience": config.patience,
        "seed": config.seed,
        "train_count": len(train_pairs),
        "val_count": len(val_pairs),
        "checkpoint_metric": "val_mean_iou",
    }
    history: list[dict] = []
    best_epoch = 0
    best_miou = float("-inf")
    reason = "max_epochs"

    _save_checkpoint(out_dir / LAST_NAME, model, config, 0, float("nan"))
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = torch.randperm(len(train_pairs), generator=shuffler)
        batch_losses = []
        finite = True
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            probs = model.probabilities(train_pairs.images[idx])
            loss = combined_loss(probs, one_hot(train_pairs.masks[idx]), settings)
            if not torch.isfinite(loss):
                finite = False
                break
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            batch_losses.append(float(loss.detach()))
        if not finite:
            reason = "diverged"
            break

        record = {"epoch": epoch,
                  "train_step_loss": sum(batch_losses) / len(batch_losses)}
        for split, pairs in (("train", train_pairs), ("val", val_pairs)):
            stats = _eval_split(model, pairs, settings, config.batch_size)
            for key, value in stats.items():
                record[f"{split}_{key}"] = value
        history.append(record)

        _save_checkpoint(out_dir / LAST_NAME, model, config, epoch,
                         record["val_mean_iou"])
        if record["val_mean_iou"] > best_miou:
            best_miou = record["val_mean_iou"]
            best_epoch = epoch
            _save_checkpoint(out_dir / BEST_NAME, model, config, epoch, best_miou)
        if stop_train_dice is not None and record["train_dice"] >= stop_train_dice:
            reason = "target_reached"
            break
        if epoch - best_epoch >= config.patience:
            reason = "early_stop"
            break

    with open(out_dir / HISTORY_NAME, "w", encoding="ascii") as fh:
        meta["stopped_reason"] = reason
        fh.write(json.dumps(meta) + "\n")
        for record in history:
            fh.write(json.dumps(record) + "\n")
    return TrainResult(history=history, best_epoch=best_epoch,
                       best_val_miou=best_miou, stopped_reason=reason,
                       out_dir=out_dir)


def _save_checkpoint(path, model: SpineUNet, config: TrainConfig,
                     epoch: int, val_miou: float) -> None:
    torch.save({
        "state_dict": model.state_dict(),
        "config": dataclasses.asdict(config),
        "epoch": epoch,
        "val_mean_iou": val_miou,
    }, path)


def load_checkpoint(path) -> tuple[SpineUNet, dict]:
    """Rebuild the model from a checkpoint; returns (model, record)."""
    record = torch.load(path, weights_only=False)
    raw = dict(record["config"])
    raw["encoder_channels"] = tuple(raw["encoder_channels"])
    loss_raw = dict(raw.pop("loss"))
    loss_raw["alpha_class"] = tuple(loss_raw["alpha_class"])
    config = TrainConfig(loss=LossSettings(**loss_raw), **raw)
    model = build_model(config)
    model.load_state_dict(record["state_dict"])
    model.eval()
    return model, record


def validation_miou(model: SpineUNet, val_pairs: TensorPairs,
                    config: TrainConfig) -> float:
    """Recompute the checkpoint metric for a loaded model."""
    return _eval_split(model, val_pairs, config.loss,
                       config.batch_size)["mean_iou"]
