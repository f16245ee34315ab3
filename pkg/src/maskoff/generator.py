"""Gated-convolution inpainting generator with M-CSAM blocks in the bottleneck."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import MCSAM, MCSAMConfig
from .imaging import composite

ATTENTION_MODES = ("mcsam", "csam_only", "none")


@dataclass(frozen=True)
class GeneratorConfig:
    base_width: int = 16
    input_size: int = 64
    num_mcsam: int = 3
    in_channels: int = 4
    attention_mode: str = "mcsam"
    kernel_size: int = 3

    def __post_init__(self):
        if self.input_size % 16:
            raise ValueError(f"input_size must be divisible by 16, got {self.input_size}")
        if self.base_width < 1:
            raise ValueError("base_width must be >= 1")
        if self.bottleneck_channels % 4:
            raise ValueError("bottleneck channels (8 * base_width) must be divisible by 4")
        if self.attention_mode not in ATTENTION_MODES:
            raise ValueError(f"attention_mode must be one of {ATTENTION_MODES}")
        if self.num_mcsam < 0:
            raise ValueError("num_mcsam must be >= 0")

    @property
    def encoder_widths(self) -> tuple:
        return tuple(self.base_width * m for m in (1, 2, 4, 8))

    @property
    def bottleneck_channels(self) -> int:
        return self.base_width * 8


class GatedConv2d(nn.Module):
    """``act(conv_f(x)) * sigmoid(conv_g(x))`` with separate feature and gate convolutions."""

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, dilation=1,
                 activation=F.elu):
        super().__init__()
        padding = dilation * (kernel_size - 1) // 2
        self.feature = nn.Conv2d(in_channels, out_channels, kernel_size, stride, padding, dilation)
        self.gate = nn.Conv2d(in_channels, out_channels, kernel_size, stride, padding, dilation)
        self.activation = activation

    def gate_values(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.gate(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feat = self.feature(x)
        if self.activation is not None:
            feat = self.activation(feat)
        return feat * self.gate_values(x)


class InpaintingGenerator(nn.Module):
    """Four stride-2 gated encoder layers, ``num_mcsam`` attention blocks at
    constant shape, and four (bilinear x2, concat skip, gated conv) decoder
    stages followed by a 3-channel tanh head.

    The decoder stages consume, in order, the outputs of enc3, enc2, enc1 and
    the 4-channel network input, i.e. the encoder features sitting at the
    resolution each stage upsamples to.
    """

    def __init__(self, cfg: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        self.cfg = cfg
        k = cfg.kernel_size
        w1, w2, w3, w4 = cfg.encoder_widths
        self.enc1 = GatedConv2d(cfg.in_channels, w1, k, stride=2)
        self.enc2 = GatedConv2d(w1, w2, k, stride=2)
        self.enc3 = GatedConv2d(w2, w3, k, stride=2)
        self.enc4 = GatedConv2d(w3, w4, k, stride=2)

        use_attention = cfg.attention_mode in ("mcsam", "csam_only")
        multi_scale = cfg.attention_mode in ("mcsam", "none")
        for i in range(1, cfg.num_mcsam + 1):
            block = MCSAM(MCSAMConfig(w4), use_attention=use_attention, multi_scale=multi_scale)
            self.add_module(f"mcsam{i}", block)

        self.dec1 = GatedConv2d(w4 + w3, w3, k)
        self.dec2 = GatedConv2d(w3 + w2, w2, k)
        self.dec3 = GatedConv2d(w2 + w1, w1, k)
        self.dec4 = GatedConv2d(w1 + cfg.in_channels, w1, k)
        self.head = nn.Conv2d(w1, 3, k, padding=k // 2)

    def gated_layers(self):
        return [self.enc1, self.enc2, self.enc3, self.enc4,
                self.dec1, self.dec2, self.dec3, self.dec4]

    def forward(self, inp: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Raw output in (-1, 1) for a model-range image and its ``N x 1 x H x W`` mask."""
        size = self.cfg.input_size
        if inp.dim() != 4 or inp.shape[1] != 3 or inp.shape[-2:] != (size, size):
            raise ValueError(f"expected N x 3 x {size} x {size} input, got {tuple(inp.shape)}")
        if mask.shape != (inp.shape[0], 1, size, size):
            raise ValueError(f"mask shape {tuple(mask.shape)} does not match input")
        x0 = torch.cat([inp, mask], dim=1)
        e1 = self.enc1(x0)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        h = self.enc4(e3)
        for i in range(1, self.cfg.num_mcsam + 1):
            h = getattr(self, f"mcsam{i}")(h)
        for dec, skip in ((self.dec1, e3), (self.dec2, e2), (self.dec3, e1), (self.dec4, x0)):
            h = F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False)
            h = dec(torch.cat([h, skip], dim=1))
        return torch.tanh(self.head(h))

    def inpaint(self, inp: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Composite of the input (visible pixels) and the raw output (masked pixels)."""
        return composite(inp, mask, self(inp, mask))
