"""U-Net spatial encoder with bidirectional temporal recurrence and
additive attention over time; attention weights are reused to aggregate
skip features across time steps."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .config import PATCH_SIZE, TARGET_SIZE, ModelConfig

_BOTTLENECK = PATCH_SIZE // 4  # two 2x2 poolings
_CROP = (PATCH_SIZE - TARGET_SIZE) // 2


def _conv_block(in_ch: int, mid_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, mid_ch, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(mid_ch, out_ch, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class TemporalAttention(nn.Module):
    """Single-head additive scoring over time; weights softmax to 1."""

    def __init__(self, dim: int, width: int):
        super().__init__()
        self.score = nn.Sequential(nn.Linear(dim, width), nn.Tanh(), nn.Linear(width, 1))

    def forward(self, seq: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        # seq: (N, T, D) -> context (N, D), weights (N, T)
        weights = torch.softmax(self.score(seq).squeeze(-1), dim=1)
        context = (weights.unsqueeze(-1) * seq).sum(dim=1)
        return context, weights


class Statt(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        e = config.encoder_channels
        d = config.decoder_channels
        u = config.upsample_channels
        self.enc1 = _conv_block(config.in_channels, e[0], e[1])
        self.enc2 = _conv_block(e[1], e[2], e[3])
        self.enc3 = _conv_block(e[3], e[4], e[5])
        self.pool = nn.MaxPool2d(2)
        self.lstm = nn.LSTM(e[5], config.lstm_hidden, batch_first=True, bidirectional=True)
        self.attention = TemporalAttention(2 * config.lstm_hidden, config.attention_width)
        self.up1 = nn.ConvTranspose2d(2 * config.lstm_hidden, u[0], 2, stride=2)
        self.dec1 = _conv_block(u[0] + e[3], d[0], d[1])
        self.up2 = nn.ConvTranspose2d(d[1], u[1], 2, stride=2)
        self.dec2 = _conv_block(u[1] + e[1], d[2], d[3])
        self.head = nn.Conv2d(d[3], config.num_classes, 1)

    @staticmethod
    def _aggregate(skip: torch.Tensor, weights: torch.Tensor, b: int, t: int) -> torch.Tensor:
        """Time-collapse a per-step skip feature with the attention map."""
        _, ch, h, w = skip.shape
        skip = skip.reshape(b, t, ch, h, w)
        wmap = F.interpolate(weights, size=(h, w), mode="nearest")
        return (skip * wmap.unsqueeze(2)).sum(dim=1)

    def forward(
        self, x: torch.Tensor, return_attention: bool = False
    ) -> torch.Tensor | tuple[torch.Tensor, torch.Tensor]:
        # x: (B, T, C, 32, 32) -> logits (B, K, 16, 16)
        if x.shape[-2:] != (PATCH_SIZE, PATCH_SIZE):
            raise ValueError(f"expected {PATCH_SIZE}x{PATCH_SIZE} patches, got {tuple(x.shape)}")
        if x.shape[2] != self.config.in_channels:
            raise ValueError(
                f"expected {self.config.in_channels} input channels, got {x.shape[2]}"
            )
        b, t = x.shape[:2]
        flat = x.reshape(b * t, *x.shape[2:])
        skip1 = self.enc1(flat)  # (b*t, e1, 32, 32)
        skip2 = self.enc2(self.pool(skip1))  # (b*t, e3, 16, 16)
        bottleneck = self.enc3(self.pool(skip2))  # (b*t, e5, 8, 8)
        ch = bottleneck.shape[1]
        n = _BOTTLENECK * _BOTTLENECK
        seq = (
            bottleneck.reshape(b, t, ch, n)
            .permute(0, 3, 1, 2)
            .reshape(b * n, t, ch)
        )
        hidden, _ = self.lstm(seq)  # (b*n, t, 2*lstm_hidden)
        context, weights = self.attention(hidden)
        context = (
            context.reshape(b, _BOTTLENECK, _BOTTLENECK, -1).permute(0, 3, 1, 2)
        )
        wmap = (
            weights.reshape(b, _BOTTLENECK, _BOTTLENECK, t).permute(0, 3, 1, 2)
        )  # (b, t, 8, 8)
        agg2 = self._aggregate(skip2, wmap, b, t)
        agg1 = self._aggregate(skip1, wmap, b, t)
        y = self.dec1(torch.cat([self.up1(context), agg2], dim=1))
        y = self.dec2(torch.cat([self.up2(y), agg1], dim=1))
        logits = self.head(y)[:, :, _CROP : _CROP + TARGET_SIZE, _CROP : _CROP + TARGET_SIZE]
        if return_attention:
            return logits, wmap
        return logits


def masked_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Pixelwise cross-entropy with unknown (code 0) pixels masked out; a
    batch with no known pixels contributes zero."""
    shifted = targets.long() - 1  # unknown -> -1
    if not (shifted >= 0).any():
        return logits.sum() * 0.0
    return F.cross_entropy(logits, shifted, ignore_index=-1)


def pixel_accuracy(logits: torch.Tensor, targets: torch.Tensor) -> float:
    """Fraction of known target pixels predicted correctly."""
    known = targets > 0
    if not known.any():
        return 0.0
    predicted = logits.argmax(dim=1) + 1
    return float((predicted[known] == targets[known]).float().mean())
