"""Gradient liveness probe for the decoder path.

A rectifier with zero slope can trap units in a region where their
gradient is identically zero; the leaky slope is supposed to prevent
that.  The probe drives random batches through a fresh model and
records, per decoder layer, the smallest gradient norm seen.
"""

from __future__ import annotations

import dataclasses
import math

import torch

from .config import TrainConfig
from .losses import combined_loss, one_hot
from .model import build_model


def probe_decoder_gradients(config: TrainConfig | None = None,
                            batches: int = 100, batch_size: int = 2,
                            seed: int = 0) -> dict[str, float]:
    """Minimum per-layer gradient norm across random batches.

    Every decoder layer staying above zero means no layer ever went
    silent during the sweep.
    """
    config = config or TrainConfig()
    model = build_model(config)
    model.train()
    gen = torch.Generator().manual_seed(seed)
    size = config.input_size
    minima: dict[str, float] = {name: math.inf for name, _ in model.decoder_layers()}
    for _ in range(batches):
        images = torch.randn(batch_size, config.in_channels, size, size,
                             generator=gen)
        labels = torch.randint(0, config.num_classes, (batch_size, size, size),
                               generator=gen)
        model.zero_grad()
        loss = combined_loss(model.probabilities(images), one_hot(labels),
                             config.loss)
        loss.backward()
        for name, layer in model.decoder_layers():
            sq = 0.0
            for param in layer.parameters():
                if param.grad is not None:
                    sq += float(param.grad.pow(2).sum())
            minima[name] = min(minima[name], math.sqrt(sq))
    return minima


def probe_with_slope(slope: float, batches: int = 100,
                     batch_size: int = 2, seed: int = 0) -> dict[str, float]:
    """Same probe with the leaky slope overridden."""
    config = dataclasses.replace(TrainConfig(), leaky_slope=slope)
    return probe_decoder_gradients(config, batches=batches,
                                   batch_size=batch_size, seed=seed)
