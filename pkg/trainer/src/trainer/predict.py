"""Turn checkpoints into grayscale prediction masks."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import TensorPairs, encode_mask, load_workspace
from .model import SpineUNet


def predict_labels(model: SpineUNet, images: torch.Tensor,
                   batch_size: int = 8) -> torch.Tensor:
    """Argmax class labels (n, h, w) for a batch of images."""
    model.eval()
    out = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            probs = model.probabilities(images[start:start + batch_size])
            out.append(probs.argmax(dim=-1))
    return torch.cat(out)


def save_predictions(model: SpineUNet, workspace, out_dir,
                     split: str | None = None) -> list[Path]:
    """Predict every kept workspace entry and write grayscale masks.

    Output files keep the restored mask's file name so the curation
    scorer can match prediction to ground truth directly.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs, entries = load_workspace(workspace, split=split)
    labels = predict_labels(model, pairs.images)
    written = []
    for row, entry in enumerate(entries):
        gray = encode_mask(labels[row].numpy().astype(np.int64))
        path = out_dir / Path(entry["restored_ref"]).name
        Image.fromarray(gray, mode="L").save(path)
        written.append(path)
    return written


def predict_pairs(model: SpineUNet, pairs: TensorPairs) -> torch.Tensor:
    return predict_labels(model, pairs.images)
