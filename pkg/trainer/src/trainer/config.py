"""Training configuration."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class LossSettings:
    """Mirror of the loss kernel knobs carried by exported vector files."""

    gamma: float = 4.0
    alpha_mix: float = 0.6
    alpha_class: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    epsilon: float = 1e-6
    prob_floor: float = 1e-7


@dataclass
class TrainConfig:
    """Toy-scale settings for the modified U-Net.

    The encoder narrows aggressively to keep desk runtimes small, but the
    deepest stage stays at 512 channels.  The checkpoint metric is fixed:
    validation mean IoU picks the best epoch.
    """

    input_size: int = 64
    in_channels: int = 1
    num_classes: int = 4
    encoder_channels: tuple[int, ...] = (16, 32, 64, 128)
    bottleneck_channels: int = 512
    leaky_slope: float = 0.1
    use_batchnorm: bool = True
    use_dropout: bool = True
    dropout_rate: float = 0.1
    batch_size: int = 8
    max_epochs: int = 100
    patience: int = 10
    learning_rate: float = 1e-3
    seed: int = 0
    loss: LossSettings = field(default_factory=LossSettings)

    def validate(self) -> None:
        depth = len(self.encoder_channels)
        if depth < 1:
            raise ValueError("need at least one encoder stage")
        if self.input_size % (2 ** depth) != 0:
            raise ValueError(
                f"input size {self.input_size} not divisible by 2^{depth}"
            )
        if self.bottleneck_channels < 1:
            raise ValueError("bottleneck must have at least one channel")
        if self.leaky_slope < 0:
            raise ValueError(f"negative leaky slope {self.leaky_slope}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout rate {self.dropout_rate} outside [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch size and max epochs must be positive")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 <= self.loss.alpha_mix <= 1.0:
            raise ValueError(f"alpha_mix {self.loss.alpha_mix} outside [0, 1]")
