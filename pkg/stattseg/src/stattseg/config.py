"""Model hyperparameters and shape contracts."""
from __future__ import annotations

from dataclasses import dataclass

PATCH_SIZE = 32
TARGET_SIZE = 16
STRIDE = 16


@dataclass
class ModelConfig:
    num_classes: int = 28
    in_channels: int = 11  # image bands + 1 window-validity flag channel
    encoder_channels: tuple[int, ...] = (64, 64, 128, 128, 256, 256)
    decoder_channels: tuple[int, ...] = (128, 128, 64, 64)
    upsample_channels: tuple[int, ...] = (128, 64)
    lstm_hidden: int = 64
    attention_width: int = 32
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 16

    def validate(self) -> None:
        if len(self.encoder_channels) != 6:
            raise ValueError("encoder needs six convolution channel counts")
        if len(self.decoder_channels) != 4:
            raise ValueError("decoder needs four convolution channel counts")
        if len(self.upsample_channels) != 2:
            raise ValueError("two transposed-convolution channel counts expected")
        for name in ("num_classes", "in_channels", "lstm_hidden", "attention_width",
                     "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if any(c < 1 for c in self.encoder_channels + self.decoder_channels
               + self.upsample_channels):
            raise ValueError("channel counts must be positive")

    @classmethod
    def micro(cls, num_classes: int, in_channels: int) -> "ModelConfig":
        """Shrunken config for CPU-scale tests and desk-scale runs."""
        return cls(
            num_classes=num_classes,
            in_channels=in_channels,
            encoder_channels=(8, 8, 16, 16, 32, 32),
            decoder_channels=(16, 16, 8, 8),
            upsample_channels=(16, 8),
            lstm_hidden=16,
            attention_width=8,
        )

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "in_channels": self.in_channels,
            "encoder_channels": list(self.encoder_channels),
            "decoder_channels": list(self.decoder_channels),
            "upsample_channels": list(self.upsample_channels),
            "lstm_hidden": self.lstm_hidden,
            "attention_width": self.attention_width,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        data = dict(raw)
        for key in ("encoder_channels", "decoder_channels", "upsample_channels"):
            data[key] = tuple(data[key])
        return cls(**data)
