"""Frozen feature backbones shared by the perceptual/style losses and the
feature patch discriminator."""

from __future__ import annotations

import os
from pathlib import Path
from typing import List, Optional, Sequence

import torch
import torch.nn as nn

BACKBONE_ENV = "MASKOFF_BACKBONE_DIR"
VGG16_FILENAME = "vgg16.pth"

# indices into torchvision's vgg16().features of relu1_2, relu2_2, relu3_3, relu4_3, relu5_3
VGG16_TAPS = {"relu1_2": 3, "relu2_2": 8, "relu3_3": 15, "relu4_3": 22, "relu5_3": 29}
DEFAULT_LAYERS = ("relu1_2", "relu2_2", "relu3_3", "relu4_3", "relu5_3")
FEATURE_DISC_LAYER = "relu3_3"

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class BackboneUnavailableError(FileNotFoundError):
    pass


class FeatureBackbone(nn.Module):
    """Base for frozen extractors returning a list of activation maps.

    Inputs are model-range (``[-1, 1]``) ``N x 3 x H x W`` batches.
    """

    layer_names: Sequence[str] = ()

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        return self

    def train(self, mode: bool = True):
        # frozen: always evaluation behaviour
        return super().train(False)

    def tap(self, name: str):
        """Callable returning the single activation map ``name``."""
        index = list(self.layer_names).index(name)
        return lambda img: self(img, upto=index)[index]

    @property
    def channels(self) -> List[int]:
        raise NotImplementedError


class VGG16Backbone(FeatureBackbone):
    def __init__(self, weights_path: Optional[os.PathLike] = None,
                 layers: Sequence[str] = DEFAULT_LAYERS):
        super().__init__()
        from torchvision.models import vgg16

        unknown = set(layers) - set(VGG16_TAPS)
        if unknown:
            raise ValueError(f"unknown VGG-16 layers: {sorted(unknown)}")
        self.layer_names = tuple(layers)
        path = resolve_vgg16_weights(weights_path)
        state = torch.load(path, map_location="cpu", weights_only=True)
        if any(k.startswith("features.") for k in state):
            state = {k[len("features."):]: v for k, v in state.items() if k.startswith("features.")}
        last = max(VGG16_TAPS[name] for name in self.layer_names)
        features = vgg16(weights=None).features
        features.load_state_dict(state)
        self.features = features[: last + 1]
        self._taps = [VGG16_TAPS[name] for name in self.layer_names]
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.freeze()

    @property
    def channels(self) -> List[int]:
        out = []
        for idx in self._taps:
            conv = [m for m in self.features[:idx] if isinstance(m, nn.Conv2d)][-1]
            out.append(conv.out_channels)
        return out

    def forward(self, img: torch.Tensor, upto: Optional[int] = None) -> List[torch.Tensor]:
        x = ((img + 1.0) / 2.0 - self.mean) / self.std
        taps = self._taps if upto is None else self._taps[: upto + 1]
        feats = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in taps:
                feats.append(x)
                if len(feats) == len(taps):
                    break
        return feats


def resolve_vgg16_weights(weights_path: Optional[os.PathLike] = None) -> Path:
    """Locate VGG-16 weights without downloading anything.

    Search order: the explicit path, then ``$MASKOFF_BACKBONE_DIR/vgg16.pth``.
    """
    candidates = []
    if weights_path is not None:
        candidates.append(Path(weights_path))
    env_dir = os.environ.get(BACKBONE_ENV)
    if env_dir:
        candidates.append(Path(env_dir) / VGG16_FILENAME)
    for path in candidates:
        if path.is_file():
            return path
    tried = ", ".join(str(p) for p in candidates) or "nothing configured"
    raise BackboneUnavailableError(
        "VGG-16 weights not found (tried: " + tried + "). Provision them once, e.g. "
        "`python -c \"import torch, torchvision; torch.save(torchvision.models.vgg16("
        "weights='IMAGENET1K_V1').state_dict(), 'vgg16.pth')\"`, then set "
        f"{BACKBONE_ENV} to the directory holding {VGG16_FILENAME} or pass the path "
        "explicitly. Use backbone=surrogate for offline runs."
    )


class SurrogateBackbone(FeatureBackbone):
    """Small frozen random convolution stack with five taps.

    Stands in for VGG-16 in tests and desk-scale runs where pretrained
    weights are not provisioned. Tap ``k`` sits after ``k`` 2x2 average pools,
    mirroring the resolution ladder of the VGG taps.
    """

    def __init__(self, widths: Sequence[int] = (8, 16, 32, 32, 32), seed: int = 0):
        super().__init__()
        self.layer_names = tuple(f"tap{i + 1}" for i in range(len(widths)))
        gen = torch.Generator().manual_seed(seed)
        blocks = []
        c = 3
        for i, w in enumerate(widths):
            conv = nn.Conv2d(c, w, 3, padding=1)
            with torch.no_grad():
                fan_in = c * 9
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * (2.0 / fan_in) ** 0.5)
                conv.bias.copy_(torch.randn(w, generator=gen) * 0.01)
            layers = [nn.AvgPool2d(2)] if i > 0 else []
            layers += [conv, nn.ReLU()]
            blocks.append(nn.Sequential(*layers))
            c = w
        self.blocks = nn.ModuleList(blocks)
        self._widths = list(widths)
        self.freeze()

    @property
    def channels(self) -> List[int]:
        return list(self._widths)

    def forward(self, img: torch.Tensor, upto: Optional[int] = None) -> List[torch.Tensor]:
        n = len(self.blocks) if upto is None else upto + 1
        feats = []
        x = img
        for block in self.blocks[:n]:
            x = block(x)
            feats.append(x)
        return feats


def build_backbone(kind: str = "vgg16", weights_path=None, **kwargs) -> FeatureBackbone:
    if kind == "vgg16":
        return VGG16Backbone(weights_path, **kwargs)
    if kind == "surrogate":
        return SurrogateBackbone(**kwargs)
    raise ValueError(f"unknown backbone {kind!r}; expected 'vgg16' or 'surrogate'")


def feature_disc_tap(backbone: FeatureBackbone) -> str:
    """Name of the relu3_3-equivalent layer of ``backbone``."""
    if isinstance(backbone, VGG16Backbone) and FEATURE_DISC_LAYER in backbone.layer_names:
        return FEATURE_DISC_LAYER
    return backbone.layer_names[min(2, len(backbone.layer_names) - 1)]
