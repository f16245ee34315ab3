"""Patch critics and the relativistic average least-squares losses."""

from __future__ import annotations

from typing import Callable, Tuple

import torch
import torch.nn as nn

# (kernel, stride, padding) of the 70x70 patch critic
PATCH_LAYERS = ((4, 2, 1), (4, 2, 1), (4, 2, 1), (4, 1, 1), (4, 1, 1))


def receptive_field(layers=PATCH_LAYERS) -> Tuple[int, int, int]:
    """Return ``(size, jump, start)`` so output cell ``i`` sees input pixels
    ``start + jump * i`` through ``start + jump * i + size - 1``."""
    size, jump, start = 1, 1, 0
    for k, s, p in layers:
        size += (k - 1) * jump
        start -= p * jump
        jump *= s
    return size, jump, start


class PatchDiscriminator(nn.Module):
    """Pixel-space patch critic whose output cells each see a 70x70 window.

    No normalization layers are used, so every score depends only on the
    pixels inside its own receptive field.
    """

    def __init__(self, in_channels: int = 3, base_width: int = 64, slope: float = 0.2):
        super().__init__()
        widths = [base_width, base_width * 2, base_width * 4, base_width * 8, 1]
        layers = []
        c = in_channels
        for i, ((k, s, p), w) in enumerate(zip(PATCH_LAYERS, widths)):
            layers.append(nn.Conv2d(c, w, k, s, p))
            if i < len(PATCH_LAYERS) - 1:
                layers.append(nn.LeakyReLU(slope))
            c = w
        self.net = nn.Sequential(*layers)

    @staticmethod
    def output_size(size: int) -> int:
        for k, s, p in PATCH_LAYERS:
            size = (size + 2 * p - k) // s + 1
        return size

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        h, w = img.shape[-2:]
        if min(self.output_size(h), self.output_size(w)) < 1:
            raise ValueError(f"input {h}x{w} is too small to produce a score cell")
        return self.net(img)


class FeaturePatchDiscriminator(nn.Module):
    """Patch critic over a frozen backbone feature map.

    ``feature_extractor`` maps an image batch to a single feature map; the
    extractor's own weights are expected to be frozen, but gradients still
    flow through it to the image.
    """

    def __init__(self, feature_extractor: Callable[[torch.Tensor], torch.Tensor],
                 in_channels: int, base_width: int = 64, slope: float = 0.2):
        super().__init__()
        self.feature_extractor = feature_extractor
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, base_width, 3, 1, 1),
            nn.LeakyReLU(slope),
            nn.Conv2d(base_width, base_width * 2, 4, 2, 1),
            nn.LeakyReLU(slope),
            nn.Conv2d(base_width * 2, base_width * 2, 3, 1, 1),
            nn.LeakyReLU(slope),
            nn.Conv2d(base_width * 2, 1, 3, 1, 1),
        )

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        try:
            feats = self.feature_extractor(img)
        except Exception as exc:
            raise RuntimeError(f"feature extractor failed: {exc}") from exc
        return self.net(feats)


def ralsgan_losses(scores_real: torch.Tensor, scores_fake: torch.Tensor):
    """Generator and critic losses of the relativistic average LS objective.

    With relativistic scores ``d_rf = C(real) - mean C(fake)`` and
    ``d_fr = C(fake) - mean C(real)``::

        L_gen  = -E[d_rf ** 2]       - E[(1 - d_fr) ** 2]
        L_disc = -E[(1 - d_rf) ** 2] - E[d_fr ** 2]

    Means run jointly over batch and patch cells. The signs follow the
    published form verbatim.
    """
    if scores_real.numel() == 0 or scores_fake.numel() == 0:
        raise ValueError("critic score grids must be non-empty")
    d_rf = scores_real - scores_fake.mean()
    d_fr = scores_fake - scores_real.mean()
    loss_gen = -(d_rf ** 2).mean() - ((1.0 - d_fr) ** 2).mean()
    loss_disc = -((1.0 - d_rf) ** 2).mean() - (d_fr ** 2).mean()
    return loss_gen, loss_disc
