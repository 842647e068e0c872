"""Torch port of the reference loss kernel.

Operates on channel-last tensors so exported vector payloads map onto it
without reshuffling; the training loop permutes its NCHW activations
before calling in.  Formulas follow the reference kernel exactly: the
focusing factor uses the raw probability, only the log argument is
clamped, and dice pools every channel into one global sum.
"""

from __future__ import annotations

import torch

from .config import LossSettings


def _pixels(pred: torch.Tensor) -> int:
    return pred.numel() // pred.shape[-1]


def focal_loss(pred: torch.Tensor, true: torch.Tensor,
               settings: LossSettings) -> torch.Tensor:
    """Mean focal loss over pixels for (..., num_classes) tensors."""
    alpha = torch.as_tensor(settings.alpha_class, dtype=pred.dtype,
                            device=pred.device)
    clamped = torch.clamp(pred, min=settings.prob_floor)
    site = -alpha * (1.0 - pred) ** settings.gamma * true * torch.log(clamped)
    return site.sum() / _pixels(pred)


def dice_loss(pred: torch.Tensor, true: torch.Tensor,
              settings: LossSettings) -> torch.Tensor:
    """Global soft dice loss pooled over every channel."""
    inter = (true * pred).sum()
    denom = true.sum() + pred.sum()
    return 1.0 - (2.0 * inter + settings.epsilon) / (denom + settings.epsilon)


def combined_loss(pred: torch.Tensor, true: torch.Tensor,
                  settings: LossSettings) -> torch.Tensor:
    """alpha_mix times focal plus (1 - alpha_mix) times dice."""
    return settings.alpha_mix * focal_loss(pred, true, settings) \
        + (1.0 - settings.alpha_mix) * dice_loss(pred, true, settings)


def one_hot(labels: torch.Tensor, num_classes: int = 4) -> torch.Tensor:
    """(..., h, w) int labels to a channel-last float one-hot tensor."""
    return torch.nn.functional.one_hot(labels.long(), num_classes).float()
