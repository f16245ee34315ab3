"""Training configuration, presets and the plain-text config file format.

Config files hold one ``key = value`` pair per line; ``#`` starts a comment.
Keys are :class:`TrainConfig` field names. Values are parsed as the field's
type (``true``/``false`` for booleans, ``none`` for optional fields).
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Union

from .generator import ATTENTION_MODES
from .losses import SUPERVISION_MODES, LossWeights


ADVERSARIAL_OBJECTIVES = ("maximize", "verbatim")


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    deterministic: bool = True
    image_size: int = 64
    batch_size: int = 4
    epochs: int = 20
    # None: one pass over the data per epoch
    steps_per_epoch: Optional[int] = None
    max_steps: Optional[int] = None

    base_lr: float = 2e-4
    lr_decay_per_epoch: float = 2e-6
    decay_start_epoch: int = 20
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999

    lambda_r: float = 1.0
    lambda_p: float = 0.1
    lambda_s: float = 250.0
    lambda_adv: float = 0.1
    # "maximize": both players ascend their signed relativistic objectives
    # (the well-posed reading); "verbatim": minimize them as written
    adversarial_objective: str = "maximize"
    supervision_mode: str = "local"
    attention_mode: str = "mcsam"
    gram_spatial_norm: bool = True

    gen_base_width: int = 16
    num_mcsam: int = 3
    disc_base_width: int = 16
    seg_base_width: int = 8
    seg_depth: int = 4
    seg_lr: Optional[float] = None
    mask_threshold: float = 0.5

    backbone: str = "surrogate"
    backbone_weights: Optional[str] = None
    log_every: int = 50

    def __post_init__(self):
        if self.supervision_mode not in SUPERVISION_MODES:
            raise ValueError(f"supervision_mode must be one of {SUPERVISION_MODES}")
        if self.attention_mode not in ATTENTION_MODES:
            raise ValueError(f"attention_mode must be one of {ATTENTION_MODES}")
        if self.adversarial_objective not in ADVERSARIAL_OBJECTIVES:
            raise ValueError(f"adversarial_objective must be one of {ADVERSARIAL_OBJECTIVES}")
        if self.backbone not in ("vgg16", "surrogate"):
            raise ValueError("backbone must be 'vgg16' or 'surrogate'")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be >= 1")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_r, self.lambda_p, self.lambda_s, self.lambda_adv)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


PRESETS = {
    # offline, laptop-scale runs
    "desk": TrainConfig(),
    # overfit check: 16 images at 64x64, 2000 steps, no decay inside the budget
    "overfit": TrainConfig(steps_per_epoch=100, epochs=20, max_steps=2000),
    # full-scale setting, not exercised by the tests
    "full": TrainConfig(
        image_size=256, batch_size=16, gen_base_width=64, disc_base_width=64,
        seg_base_width=64, backbone="vgg16", epochs=100,
    ),
}


def _parse_value(field: dataclasses.Field, raw: str):
    raw = raw.strip()
    ftype = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", str(field.type))
    optional = "Optional" in ftype
    if optional and raw.lower() in ("none", "null", ""):
        return None
    if "bool" in ftype:
        if raw.lower() in ("true", "yes", "1", "on"):
            return True
        if raw.lower() in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"{field.name}: expected a boolean, got {raw!r}")
    if "int" in ftype:
        return int(raw)
    if "float" in ftype:
        return float(raw)
    return raw


def parse_overrides(pairs: dict) -> dict:
    """Convert string values keyed by field name to typed values."""
    by_name = {f.name: f for f in fields(TrainConfig)}
    out = {}
    for key, raw in pairs.items():
        key = key.strip().replace("-", "_")
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        out[key] = _parse_value(by_name[key], raw) if isinstance(raw, str) else raw
    return out


def read_config_file(path: Union[str, os.PathLike]) -> dict:
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return parse_overrides(pairs)


def write_config_file(cfg: TrainConfig, path: Union[str, os.PathLike]) -> None:
    lines = []
    for key, value in cfg.to_dict().items():
        if value is None:
            value = "none"
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_config(path: Optional[Union[str, os.PathLike]] = None, preset: str = "desk",
                **overrides) -> TrainConfig:
    """Preset, then config file values, then explicit overrides."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    values = PRESETS[preset].to_dict()
    if path is not None:
        values.update(read_config_file(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(values)
