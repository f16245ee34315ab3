"""Reconstruction, perceptual, style and total objectives of the inpainter."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Sequence

import torch

from .imaging import composite

SUPERVISION_MODES = ("local", "full")


@dataclass(frozen=True)
class LossWeights:
    lambda_r: float = 1.0
    lambda_p: float = 0.1
    lambda_s: float = 250.0
    lambda_adv: float = 0.1

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


def reconstruction_loss(syn: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean absolute pixel difference."""
    if syn.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(syn.shape)} vs {tuple(gt.shape)}")
    return (syn - gt).abs().mean()


def _check_stacks(stack_syn: Sequence[torch.Tensor], stack_gt: Sequence[torch.Tensor]) -> None:
    if len(stack_syn) != len(stack_gt):
        raise ValueError(f"layer count mismatch: {len(stack_syn)} vs {len(stack_gt)}")
    for a, b in zip(stack_syn, stack_gt):
        if a.shape != b.shape:
            raise ValueError(f"feature shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def perceptual_loss(stack_syn: Sequence[torch.Tensor], stack_gt: Sequence[torch.Tensor]) -> torch.Tensor:
    """Sum over layers of ``||F_syn - F_gt||_2 / (W * H * C)``, averaged over the batch.

    The norm is the plain (not squared) Euclidean norm of each sample's
    flattened difference.
    """
    _check_stacks(stack_syn, stack_gt)
    total = stack_syn[0].new_zeros(())
    for fs, fg in zip(stack_syn, stack_gt):
        n, c, h, w = fs.shape
        diff = (fs - fg).reshape(n, -1)
        total = total + torch.linalg.vector_norm(diff, dim=1).mean() / (c * h * w)
    return total


def gram(features: torch.Tensor, spatial_norm: bool = True) -> torch.Tensor:
    """Channel Gram matrices ``F^T F`` of an ``N x C x H x W`` batch (``N x C x C``),
    divided by ``H * W`` when ``spatial_norm`` is set."""
    n, c, h, w = features.shape
    flat = features.reshape(n, c, h * w)
    g = flat @ flat.transpose(1, 2)
    if spatial_norm:
        g = g / (h * w)
    return g


def style_loss(stack_syn: Sequence[torch.Tensor], stack_gt: Sequence[torch.Tensor],
               spatial_norm: bool = True) -> torch.Tensor:
    _check_stacks(stack_syn, stack_gt)
    total = stack_syn[0].new_zeros(())
    for fs, fg in zip(stack_syn, stack_gt):
        c = fs.shape[1]
        diff = gram(fs, spatial_norm) - gram(fg, spatial_norm)
        total = total + diff.abs().sum(dim=(1, 2)).mean() / (c * c)
    return total


def total_loss(weights: LossWeights, loss_r, loss_p, loss_s, loss_adv):
    """Weighted sum of the four objective terms; refuses non-finite input."""
    for name, value in (("L_r", loss_r), ("L_p", loss_p), ("L_s", loss_s), ("L_adv", loss_adv)):
        v = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        if not math.isfinite(v):
            raise FloatingPointError(f"non-finite loss component {name} = {v}")
    return (weights.lambda_r * loss_r + weights.lambda_p * loss_p
            + weights.lambda_s * loss_s + weights.lambda_adv * loss_adv)


def supervision_target(mode: str, inp: torch.Tensor, mask: torch.Tensor,
                       raw_output: torch.Tensor) -> torch.Tensor:
    """Image the losses compare against ground truth.

    ``local`` composites the visible input with the generated masked region,
    so visible pixels contribute no gradient; ``full`` uses the raw output.
    """
    if mode == "local":
        return composite(inp, mask, raw_output)
    if mode == "full":
        return raw_output
    raise ValueError(f"unknown supervision mode {mode!r}; expected one of {SUPERVISION_MODES}")


class FeatureLosses:
    """Perceptual and style losses sharing one forward pass per image through a backbone."""

    def __init__(self, backbone, gram_spatial_norm: bool = True):
        self.backbone = backbone
        self.gram_spatial_norm = gram_spatial_norm

    def extract_features(self, img: torch.Tensor) -> List[torch.Tensor]:
        return self.backbone(img)

    def __call__(self, syn: torch.Tensor, gt: torch.Tensor):
        fs = self.extract_features(syn)
        with torch.no_grad():
            fg = self.extract_features(gt)
        return perceptual_loss(fs, fg), style_loss(fs, fg, self.gram_spatial_norm)
