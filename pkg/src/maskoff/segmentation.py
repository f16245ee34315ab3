"""U-Net style mask segmenter, its BCE objective, binarization and IoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

BCE_EPS = 1e-7


@dataclass(frozen=True)
class SegNetConfig:
    base_width: int = 8
    depth: int = 4
    input_size: int = 64

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_width < 1:
            raise ValueError("base_width must be >= 1")
        if self.input_size % (2 ** self.depth):
            raise ValueError(
                f"input_size {self.input_size} is not divisible by 2**depth = {2 ** self.depth}"
            )

    @property
    def widths(self) -> tuple:
        # stem, then one entry per encoder block; doubling stops at 8x
        return tuple(self.base_width * 2 ** min(i, 3) for i in range(self.depth + 1))


class ConvBlock(nn.Sequential):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__(
            nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
        )


def double_conv(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(ConvBlock(in_channels, out_channels), ConvBlock(out_channels, out_channels))


class Down(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.pool = nn.MaxPool2d(2)
        self.convs = double_conv(in_channels, out_channels)

    def forward(self, x):
        return self.convs(self.pool(x))


class Up(nn.Module):
    def __init__(self, in_channels: int, skip_channels: int, out_channels: int):
        super().__init__()
        self.convs = double_conv(in_channels + skip_channels, out_channels)

    def forward(self, x, skip):
        x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
        return self.convs(torch.cat([x, skip], dim=1))


class MaskSegNet(nn.Module):
    """Encoder/decoder with concatenated skips and a sigmoid head.

    A stem of two conv blocks runs at full resolution; each of the ``depth``
    encoder blocks is max-pool followed by two conv blocks, and each decoder
    block is bilinear x2 upsampling, skip concatenation and two conv blocks.
    Outputs are probabilities clamped to ``[BCE_EPS, 1 - BCE_EPS]`` so they
    stay strictly inside (0, 1).
    """

    def __init__(self, cfg: SegNetConfig = SegNetConfig()):
        super().__init__()
        self.cfg = cfg
        w = cfg.widths
        self.stem = double_conv(3, w[0])
        self.down = nn.ModuleList(Down(w[i], w[i + 1]) for i in range(cfg.depth))
        self.up = nn.ModuleList(
            Up(w[i + 1], w[i], w[i]) for i in reversed(range(cfg.depth))
        )
        self.head = nn.Conv2d(w[0], 1, 1)

    def encode(self, x: torch.Tensor) -> list:
        feats = [self.stem(x)]
        for block in self.down:
            feats.append(block(feats[-1]))
        return feats

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        size = self.cfg.input_size
        if x.dim() != 4 or x.shape[1] != 3 or x.shape[-2:] != (size, size):
            raise ValueError(f"expected N x 3 x {size} x {size} input, got {tuple(x.shape)}")
        feats = self.encode(x)
        h = feats.pop()
        for block in self.up:
            h = block(h, feats.pop())
        return self.head(h)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(x)).clamp(BCE_EPS, 1.0 - BCE_EPS)


def bce_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = BCE_EPS) -> torch.Tensor:
    """Mean binary cross-entropy of probabilities ``pred`` against a {0, 1} target."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    p = pred.clamp(eps, 1.0 - eps)
    return -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p)).mean()


def binarize(pred, threshold: float = 0.5):
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    if isinstance(pred, torch.Tensor):
        return (pred >= threshold).to(pred.dtype)
    return (np.asarray(pred) >= threshold).astype(np.float64)


def iou(a, b) -> float:
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    a = np.asarray(a.detach().cpu() if isinstance(a, torch.Tensor) else a) > 0.5
    b = np.asarray(b.detach().cpu() if isinstance(b, torch.Tensor) else b) > 0.5
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)
