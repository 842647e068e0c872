"""Encoder-decoder segmentation network.

A narrow U-Net: contraction path, a 512-channel deepest stage, and an
expansive path whose stages upsample with learned transposed
convolutions followed by a leaky activation.  Skip connections concat
encoder features into each decoder stage.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import TrainConfig


def _conv_block(in_ch: int, out_ch: int, slope: float, batchnorm: bool) -> nn.Sequential:
    layers: list[nn.Module] = []
    for first, second in ((in_ch, out_ch), (out_ch, out_ch)):
        layers.append(nn.Conv2d(first, second, kernel_size=3, padding=1,
                                bias=not batchnorm))
        if batchnorm:
            layers.append(nn.BatchNorm2d(second))
        layers.append(nn.LeakyReLU(slope))
    return nn.Sequential(*layers)


class DecoderStage(nn.Module):
    """Transposed-convolution upsample, leaky activation, then fusion."""

    def __init__(self, in_ch: int, skip_ch: int, slope: float, batchnorm: bool):
        super().__init__()
        self.upsample = nn.ConvTranspose2d(in_ch, skip_ch, kernel_size=2, stride=2)
        self.activation = nn.LeakyReLU(slope)
        self.fuse = _conv_block(skip_ch * 2, skip_ch, slope, batchnorm)

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = self.activation(self.upsample(x))
        return self.fuse(torch.cat([x, skip], dim=1))


class SpineUNet(nn.Module):
    def __init__(self, config: TrainConfig):
        super().__init__()
        config.validate()
        self.config = config
        slope = config.leaky_slope
        bn = config.use_batchnorm

        self.encoders = nn.ModuleList()
        prev = config.in_channels
        for ch in config.encoder_channels:
            self.encoders.append(_conv_block(prev, ch, slope, bn))
            prev = ch
        self.pool = nn.MaxPool2d(2)
        # dropout sits at the end of each encoder stage; the skip tensor
        # and the pooled tensor both see the dropped features
        self.dropout = nn.Dropout2d(config.dropout_rate) if config.use_dropout \
            else nn.Identity()
        self.bottleneck = _conv_block(prev, config.bottleneck_channels, slope, bn)

        self.decoders = nn.ModuleList()
        prev = config.bottleneck_channels
        for ch in reversed(config.encoder_channels):
            self.decoders.append(DecoderStage(prev, ch, slope, bn))
            prev = ch
        self.head = nn.Conv2d(prev, config.num_classes, kernel_size=1)

        self.apply(_init_weights)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Batched (n, in_channels, h, w) images to (n, classes, h, w) logits."""
        skips = []
        for encoder in self.encoders:
            x = self.dropout(encoder(x))
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for decoder, skip in zip(self.decoders, reversed(skips)):
            x = decoder(x, skip)
        return self.head(x)

    def probabilities(self, x: torch.Tensor) -> torch.Tensor:
        """Channel-last (n, h, w, classes) per-pixel probability maps."""
        return torch.softmax(self.forward(x), dim=1).permute(0, 2, 3, 1)

    def decoder_layers(self):
        """Named weight-carrying decoder layers, upsample kernels included."""
        out = []
        for i, stage in enumerate(self.decoders):
            out.append((f"decoder{i}.upsample", stage.upsample))
            convs = [m for m in stage.fuse if isinstance(m, nn.Conv2d)]
            for j, conv in enumerate(convs):
                out.append((f"decoder{i}.fuse{j}", conv))
        out.append(("head", self.head))
        return out


def _init_weights(module: nn.Module) -> None:
    # Glorot uniform kernels everywhere a convolution carries weights
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.xavier_uniform_(module.weight)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def build_model(config: TrainConfig | None = None) -> SpineUNet:
    """Seeded constructor; identical config and seed give identical weights."""
    config = config or TrainConfig()
    torch.manual_seed(config.seed)
    return SpineUNet(config)
