"""Channel-spatial attention and its multi-scale dilated wrapper."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import torch
import torch.nn as nn

DILATION_RATES: Tuple[int, ...] = (1, 2, 4, 8)


@dataclass(frozen=True)
class CSAMConfig:
    channels: int
    beta_init: float = 0.0

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")


@dataclass(frozen=True)
class MCSAMConfig:
    channels: int
    beta_init: float = 0.0

    def __post_init__(self):
        if self.channels < 4 or self.channels % 4:
            raise ValueError(f"channels must be a positive multiple of 4, got {self.channels}")

    @property
    def dilation_rates(self) -> Tuple[int, ...]:
        return DILATION_RATES

    @property
    def branch_channels(self) -> int:
        return self.channels // 4


class CSAM(nn.Module):
    """Channel-spatial attention.

    A single 3x3x3 convolution slides over the (C, H, W) volume, treating the
    channel axis as depth, so the attention map has the same shape as the
    input. The sigmoid of that map reweights the input, which is scaled by the
    learnable scalar ``beta`` and added back as a residual.
    """

    def __init__(self, cfg: CSAMConfig):
        super().__init__()
        self.cfg = cfg
        self.w3d = nn.Conv3d(1, 1, kernel_size=3, stride=1, padding=1)
        self.beta = nn.Parameter(torch.tensor(float(cfg.beta_init)))

    def attention_map(self, x: torch.Tensor) -> torch.Tensor:
        """Raw (pre-sigmoid) attention volume, same shape as ``x``."""
        return self.w3d(x.unsqueeze(1)).squeeze(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.cfg.channels:
            raise ValueError(
                f"expected N x {self.cfg.channels} x H x W input, got {tuple(x.shape)}"
            )
        weights = torch.sigmoid(self.attention_map(x))
        return self.beta * weights * x + x


class DilatedBranch(nn.Module):
    def __init__(self, channels: int, rate: int):
        super().__init__()
        if channels % 4:
            raise ValueError(f"channels must be divisible by 4, got {channels}")
        self.rate = rate
        self.conv = nn.Conv2d(channels, channels // 4, 3, padding=rate, dilation=rate)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.conv(x))


class MCSAM(nn.Module):
    """Multi-scale CSAM block.

    Four parallel dilated 3x3 convolutions (rates 1, 2, 4, 8), each producing
    C/4 channels, are concatenated in rate order, passed through :class:`CSAM`,
    and added to the block input.

    ``use_attention=False`` drops the CSAM stage (the concatenated pyramid is
    used directly), and ``multi_scale=False`` replaces the pyramid with one
    ordinary C-channel 3x3 convolution. Both exist for ablations.
    """

    def __init__(self, cfg: MCSAMConfig, use_attention: bool = True, multi_scale: bool = True):
        super().__init__()
        self.cfg = cfg
        self.multi_scale = multi_scale
        c = cfg.channels
        if multi_scale:
            for rate in DILATION_RATES:
                self.add_module(f"branch{rate}", DilatedBranch(c, rate))
        else:
            self.conv = nn.Conv2d(c, c, 3, padding=1)
        self.csam = CSAM(CSAMConfig(c, cfg.beta_init)) if use_attention else None

    def pyramid(self, x: torch.Tensor) -> torch.Tensor:
        if not self.multi_scale:
            return torch.relu(self.conv(x))
        return torch.cat([getattr(self, f"branch{r}")(x) for r in DILATION_RATES], dim=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.cfg.channels:
            raise ValueError(
                f"expected N x {self.cfg.channels} x H x W input, got {tuple(x.shape)}"
            )
        feats = self.pyramid(x)
        if self.csam is not None:
            feats = self.csam(feats)
        return x + feats

