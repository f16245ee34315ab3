"""Training loops, learning-rate schedule and checkpoint plumbing for the
segmenter and the inpainter."""

from __future__ import annotations

import logging
import math
import os
import random
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import torch

from . import checkpoint as ckpt
from .adversarial import FeaturePatchDiscriminator, PatchDiscriminator, ralsgan_losses
from .backbone import build_backbone, feature_disc_tap
from .config import TrainConfig
from .generator import GeneratorConfig, InpaintingGenerator
from .imaging import composite, hwc_to_tensor, load_image, load_mask, mask_to_tensor, resize_image, resize_mask
from .losses import FeatureLosses, reconstruction_loss, supervision_target, total_loss
from .segmentation import MaskSegNet, SegNetConfig, bce_loss, binarize, iou
from .synthesis import read_manifest

log = logging.getLogger(__name__)

SEGMENTER_KIND = "segmenter"
INPAINTER_KIND = "inpainter"


class TrainingDivergedError(FloatingPointError):
    pass


def lr_schedule(cfg: TrainConfig, epoch: int) -> float:
    """Constant ``base_lr`` through ``decay_start_epoch``, then a linear per-epoch decrement."""
    if epoch < 1:
        raise ValueError("epochs are counted from 1")
    if epoch <= cfg.decay_start_epoch:
        return cfg.base_lr
    return max(cfg.base_lr - (epoch - cfg.decay_start_epoch) * cfg.lr_decay_per_epoch, 0.0)


def set_determinism(seed: int, deterministic: bool = True) -> None:
    random.seed(seed)
    np.random.seed(seed % 2 ** 32)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)


# --- data --------------------------------------------------------------------

def load_triples(manifest: Union[str, os.PathLike], image_size: int):
    """Masked images, masks and ground truths of a manifest as ``[0, 1]`` arrays."""
    rows = read_manifest(manifest)
    if not rows:
        raise ValueError(f"manifest {manifest} has no usable records")
    masked, masks, gts = [], [], []
    for row in rows:
        masked.append(resize_image(load_image(row["masked"], 3), image_size))
        masks.append(resize_mask(load_mask(row["mask"]), image_size))
        gts.append(resize_image(load_image(row["gt"], 3), image_size))
    return np.stack(masked), np.stack(masks), np.stack(gts), rows


def batch_indices(seed: int, epoch: int, step_in_epoch: int, batch_size: int, n: int) -> np.ndarray:
    """Sample indices of one batch; a pure function of its position in training.

    Each epoch walks through concatenated random permutations of the data, so
    runs resumed at any step see the same order as uninterrupted ones.
    """
    start = step_in_epoch * batch_size
    need = start + batch_size
    order = []
    j = 0
    while len(order) < need:
        order.extend(np.random.default_rng([seed, epoch, j]).permutation(n).tolist())
        j += 1
    return np.asarray(order[start:need])


class _Trainer:
    kind = ""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.step = 0
        self.history: List[Dict[str, float]] = []

    def steps_per_epoch(self, n: int) -> int:
        return self.cfg.steps_per_epoch or max(1, math.ceil(n / self.cfg.batch_size))

    def position(self, n: int):
        spe = self.steps_per_epoch(n)
        return self.step // spe + 1, self.step % spe

    def _set_lr(self, optimizers, lr: float) -> None:
        for opt in optimizers:
            for group in opt.param_groups:
                group["lr"] = lr

    def _check_finite(self, losses: Dict[str, float]) -> None:
        bad = {k: v for k, v in losses.items() if not math.isfinite(v)}
        if bad:
            raise TrainingDivergedError(
                f"non-finite loss at step {self.step}: {bad}; last components {self.history[-1:]}"
            )

    def _budget(self, n: int, max_steps: Optional[int]) -> int:
        total = self.cfg.epochs * self.steps_per_epoch(n)
        if self.cfg.max_steps is not None:
            total = min(total, self.cfg.max_steps)
        if max_steps is not None:
            total = min(total, max_steps)
        return total

    def _rng_state(self) -> dict:
        return {"torch": torch.get_rng_state(), "numpy": np.random.get_state()[1],
                "numpy_pos": int(np.random.get_state()[2])}

    @staticmethod
    def _restore_rng(state: dict) -> None:
        torch.set_rng_state(state["torch"])
        np.random.set_state(("MT19937", state["numpy"], state["numpy_pos"]))


class SegmentationTrainer(_Trainer):
    kind = SEGMENTER_KIND

    def __init__(self, cfg: TrainConfig):
        super().__init__(cfg)
        set_determinism(cfg.seed, cfg.deterministic)
        self.net_cfg = SegNetConfig(cfg.seg_base_width, cfg.seg_depth, cfg.image_size)
        self.model = MaskSegNet(self.net_cfg)
        self.optimizer = torch.optim.Adam(
            self.model.parameters(), lr=self.lr(1), betas=(cfg.adam_beta1, cfg.adam_beta2)
        )

    def lr(self, epoch: int) -> float:
        if self.cfg.seg_lr is not None:
            return self.cfg.seg_lr * lr_schedule(self.cfg, epoch) / self.cfg.base_lr
        return lr_schedule(self.cfg, epoch)

    def fit(self, images: np.ndarray, masks: np.ndarray, max_steps: Optional[int] = None):
        """Train on ``[0, 1]`` images (``N x H x W x 3``) and masks (``N x H x W``)."""
        n = len(images)
        if n == 0:
            raise ValueError("empty training set")
        x_all = hwc_to_tensor(images)
        y_all = mask_to_tensor(masks)
        total = self._budget(n, max_steps)
        self.model.train()
        while self.step < total:
            epoch, k = self.position(n)
            self._set_lr([self.optimizer], self.lr(epoch))
            idx = torch.from_numpy(batch_indices(self.cfg.seed, epoch, k, self.cfg.batch_size, n))
            x, y = x_all[idx], y_all[idx]
            pred = self.model(x)
            loss = bce_loss(pred, y)
            self.optimizer.zero_grad(set_to_none=True)
            loss.backward()
            self.optimizer.step()
            record = {"step": self.step, "epoch": epoch, "bce": float(loss.detach()),
                      "iou": iou(binarize(pred.detach(), self.cfg.mask_threshold), y)}
            self._check_finite(record)
            self.history.append(record)
            if self.step % self.cfg.log_every == 0:
                log.info("seg step %d epoch %d bce %.5f iou %.4f", self.step, epoch,
                         record["bce"], record["iou"])
            self.step += 1
        return self

    def predict_proba(self, images: np.ndarray, batch_size: int = 16) -> np.ndarray:
        return segment_arrays(self.model, images, batch_size)

    def state_dict(self) -> dict:
        return {
            "kind": self.kind, "config": self.cfg.to_dict(),
            "params": self.model.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "counters": {"step": self.step},
            "rng": self._rng_state(),
        }

    def load_state_dict(self, state: dict) -> None:
        _check_kind(state, self.kind)
        self.model.load_state_dict(state["params"])
        self.optimizer.load_state_dict(state["optimizer"])
        self.step = state["counters"]["step"]
        self._restore_rng(state["rng"])

    def save(self, path) -> Path:
        return ckpt.save_checkpoint(path, self.state_dict())

    @classmethod
    def from_checkpoint(cls, path_or_state) -> "SegmentationTrainer":
        state = _as_state(path_or_state)
        _check_kind(state, cls.kind)
        trainer = cls(TrainConfig.from_dict(state["config"]))
        trainer.load_state_dict(state)
        return trainer


class InpaintingTrainer(_Trainer):
    """Generator plus the pixel and feature patch critics, trained alternately.

    Each step updates the generator once on the weighted sum of
    reconstruction, perceptual, style and (averaged) adversarial terms, then
    updates each critic once on its own relativistic loss.
    """

    kind = INPAINTER_KIND

    def __init__(self, cfg: TrainConfig, backbone=None):
        super().__init__(cfg)
        set_determinism(cfg.seed, cfg.deterministic)
        self.gen_cfg = GeneratorConfig(
            base_width=cfg.gen_base_width, input_size=cfg.image_size,
            num_mcsam=cfg.num_mcsam, attention_mode=cfg.attention_mode,
        )
        self.generator = InpaintingGenerator(self.gen_cfg)
        self.disc_patch = PatchDiscriminator(base_width=cfg.disc_base_width)
        if backbone is None:
            backbone = build_backbone(cfg.backbone, cfg.backbone_weights)
        self.backbone = backbone
        tap = feature_disc_tap(backbone)
        tap_channels = backbone.channels[list(backbone.layer_names).index(tap)]
        self.disc_feat = FeaturePatchDiscriminator(backbone.tap(tap), tap_channels,
                                                   base_width=cfg.disc_base_width)
        self.feature_losses = FeatureLosses(backbone, cfg.gram_spatial_norm)
        betas = (cfg.adam_beta1, cfg.adam_beta2)
        lr = lr_schedule(cfg, 1)
        self.opt_gen = torch.optim.Adam(self.generator.parameters(), lr=lr, betas=betas)
        self.opt_patch = torch.optim.Adam(self.disc_patch.parameters(), lr=lr, betas=betas)
        self.opt_feat = torch.optim.Adam(self.disc_feat.parameters(), lr=lr, betas=betas)

    @property
    def adversarial_sign(self) -> float:
        """Multiplier applied to the signed relativistic objectives before descent."""
        return -1.0 if self.cfg.adversarial_objective == "maximize" else 1.0

    @property
    def optimizers(self):
        return [self.opt_gen, self.opt_patch, self.opt_feat]

    def train_step(self, inp: torch.Tensor, mask: torch.Tensor, gt: torch.Tensor) -> Dict[str, float]:
        """One generator update then one update per critic; tensors are model range."""
        cfg = self.cfg
        critics = (self.disc_patch, self.disc_feat)
        for d in critics:
            d.requires_grad_(False)
        raw = self.generator(inp, mask)
        syn = supervision_target(cfg.supervision_mode, inp, mask, raw)
        loss_r = reconstruction_loss(syn, gt)
        loss_p, loss_s = self.feature_losses(syn, gt)
        gen_adv = []
        for d in critics:
            with torch.no_grad():
                real_scores = d(gt)
            gen_adv.append(ralsgan_losses(real_scores, d(syn))[0])
        loss_adv = (gen_adv[0] + gen_adv[1]) / 2
        sign = self.adversarial_sign
        loss = total_loss(cfg.loss_weights, loss_r, loss_p, loss_s, sign * loss_adv)
        self.opt_gen.zero_grad(set_to_none=True)
        loss.backward()
        self.opt_gen.step()

        syn_d = syn.detach()
        disc_losses = []
        for d, opt in zip(critics, (self.opt_patch, self.opt_feat)):
            d.requires_grad_(True)
            loss_d = ralsgan_losses(d(gt), d(syn_d))[1]
            opt.zero_grad(set_to_none=True)
            (sign * loss_d).backward()
            opt.step()
            disc_losses.append(float(loss_d.detach()))

        with torch.no_grad():
            hole = mask.expand_as(syn)
            n_hole = float(hole.sum())
            masked_l1 = float(((syn_d - gt).abs() * hole).sum() / max(n_hole, 1.0)) / 2.0
        return {
            "loss": float(loss.detach()), "L_r": float(loss_r.detach()),
            "L_p": float(loss_p.detach()), "L_s": float(loss_s.detach()),
            "L_adv": float(loss_adv.detach()), "L_disc_patch": disc_losses[0],
            "L_disc_feat": disc_losses[1], "masked_l1": masked_l1,
        }

    def fit(self, masked: np.ndarray, masks: np.ndarray, gts: np.ndarray,
            max_steps: Optional[int] = None, out_dir=None):
        """Train on ``[0, 1]`` arrays. With ``out_dir``, a checkpoint is written at
        the end of every epoch as ``epoch_XXXX.ckpt`` plus ``last.ckpt``."""
        n = len(masked)
        if n == 0:
            raise ValueError("empty training set")
        inp_all = hwc_to_tensor(masked) * 2 - 1
        mask_all = mask_to_tensor(masks)
        gt_all = hwc_to_tensor(gts) * 2 - 1
        total = self._budget(n, max_steps)
        spe = self.steps_per_epoch(n)
        self.generator.train()
        while self.step < total:
            epoch, k = self.position(n)
            self._set_lr(self.optimizers, lr_schedule(self.cfg, epoch))
            idx = torch.from_numpy(batch_indices(self.cfg.seed, epoch, k, self.cfg.batch_size, n))
            record = self.train_step(inp_all[idx], mask_all[idx], gt_all[idx])
            record = {"step": self.step, "epoch": epoch, **record}
            try:
                self._check_finite(record)
            except TrainingDivergedError as exc:
                if out_dir is not None and (Path(out_dir) / "last.ckpt").exists():
                    raise TrainingDivergedError(f"{exc}; last good checkpoint: {Path(out_dir) / 'last.ckpt'}")
                raise
            self.history.append(record)
            if self.step % self.cfg.log_every == 0:
                log.info("inpaint step %d epoch %d " + " ".join(f"{k} %.5f" for k in record if k not in ("step", "epoch")),
                         self.step, epoch, *[v for k, v in record.items() if k not in ("step", "epoch")])
            self.step += 1
            if out_dir is not None and (self.step % spe == 0 or self.step == total):
                self.save(Path(out_dir) / f"epoch_{epoch:04d}.ckpt")
                self.save(Path(out_dir) / "last.ckpt")
        return self

    def inpaint(self, masked: np.ndarray, masks: np.ndarray, batch_size: int = 16):
        return inpaint_arrays(self.generator, masked, masks, batch_size)

    def params(self) -> dict:
        return {**self.generator.state_dict(),
                **ckpt.prefixed(self.disc_patch.state_dict(), "disc_patch"),
                **ckpt.prefixed(self.disc_feat.state_dict(), "disc_feat")}

    def state_dict(self) -> dict:
        return {
            "kind": self.kind, "config": self.cfg.to_dict(),
            "params": self.params(),
            "optimizer": {"generator": self.opt_gen.state_dict(),
                          "disc_patch": self.opt_patch.state_dict(),
                          "disc_feat": self.opt_feat.state_dict()},
            "counters": {"step": self.step},
            "rng": self._rng_state(),
        }

    def load_state_dict(self, state: dict) -> None:
        _check_kind(state, self.kind)
        params = state["params"]
        gen = {k: v for k, v in params.items() if not k.startswith(("disc_patch.", "disc_feat."))}
        self.generator.load_state_dict(gen)
        self.disc_patch.load_state_dict(ckpt.unprefixed(params, "disc_patch"))
        self.disc_feat.load_state_dict(ckpt.unprefixed(params, "disc_feat"))
        self.opt_gen.load_state_dict(state["optimizer"]["generator"])
        self.opt_patch.load_state_dict(state["optimizer"]["disc_patch"])
        self.opt_feat.load_state_dict(state["optimizer"]["disc_feat"])
        self.step = state["counters"]["step"]
        self._restore_rng(state["rng"])

    def save(self, path) -> Path:
        return ckpt.save_checkpoint(path, self.state_dict())

    @classmethod
    def from_checkpoint(cls, path_or_state, backbone=None) -> "InpaintingTrainer":
        state = _as_state(path_or_state)
        _check_kind(state, cls.kind)
        trainer = cls(TrainConfig.from_dict(state["config"]), backbone=backbone)
        trainer.load_state_dict(state)
        return trainer


@torch.no_grad()
def inpaint_arrays(generator: InpaintingGenerator, masked: np.ndarray, masks: np.ndarray,
                   batch_size: int = 16):
    """Composites and raw outputs, both ``[0, 1]`` and ``N x H x W x 3``."""
    generator.eval()
    inp_all = hwc_to_tensor(masked) * 2 - 1
    mask_all = mask_to_tensor(masks)
    raw_out = [generator(inp_all[i: i + batch_size], mask_all[i: i + batch_size])
               for i in range(0, len(inp_all), batch_size)]
    raw = ((torch.cat(raw_out).double() + 1) / 2).numpy().transpose(0, 2, 3, 1)
    # composite in [0, 1] float64 so visible pixels are returned bit-exact
    syn = composite(np.asarray(masked, dtype=np.float64), np.asarray(masks)[..., None], raw)
    return syn, raw


@torch.no_grad()
def segment_arrays(model: MaskSegNet, images: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Soft masks (``N x H x W``) for ``[0, 1]`` images."""
    model.eval()
    x_all = hwc_to_tensor(images)
    out = [model(x_all[i: i + batch_size])[:, 0].double().numpy()
           for i in range(0, len(x_all), batch_size)]
    return np.concatenate(out)


def load_generator(path_or_state) -> InpaintingGenerator:
    """Generator alone from an inpainter checkpoint (critics and backbone are skipped)."""
    state = _as_state(path_or_state)
    _check_kind(state, INPAINTER_KIND)
    cfg = TrainConfig.from_dict(state["config"])
    gen = InpaintingGenerator(GeneratorConfig(
        base_width=cfg.gen_base_width, input_size=cfg.image_size,
        num_mcsam=cfg.num_mcsam, attention_mode=cfg.attention_mode,
    ))
    params = {k: v for k, v in state["params"].items()
              if not k.startswith(("disc_patch.", "disc_feat."))}
    gen.load_state_dict(params)
    return gen.eval()


def load_segmenter(path_or_state):
    """``(model, config)`` from a segmenter checkpoint."""
    state = _as_state(path_or_state)
    _check_kind(state, SEGMENTER_KIND)
    cfg = TrainConfig.from_dict(state["config"])
    model = MaskSegNet(SegNetConfig(cfg.seg_base_width, cfg.seg_depth, cfg.image_size))
    model.load_state_dict(state["params"])
    return model.eval(), cfg


def _as_state(path_or_state) -> dict:
    if isinstance(path_or_state, dict):
        return path_or_state
    return ckpt.load_checkpoint(path_or_state)


def _check_kind(state: dict, kind: str) -> None:
    if state.get("kind") != kind:
        raise ckpt.CheckpointError(f"expected a {kind} checkpoint, got {state.get('kind')!r}")


def train_segmenter(cfg: TrainConfig, manifest, out_dir=None,
                    max_steps: Optional[int] = None) -> SegmentationTrainer:
    masked, masks, _, _ = load_triples(manifest, cfg.image_size)
    trainer = SegmentationTrainer(cfg).fit(masked, masks, max_steps=max_steps)
    if out_dir is not None:
        trainer.save(Path(out_dir) / "segmenter.ckpt")
    return trainer


def train_inpainter(cfg: TrainConfig, manifest, out_dir=None, resume=None,
                    max_steps: Optional[int] = None, backbone=None) -> InpaintingTrainer:
    masked, masks, gts, _ = load_triples(manifest, cfg.image_size)
    if resume is not None:
        trainer = InpaintingTrainer.from_checkpoint(resume, backbone=backbone)
    else:
        trainer = InpaintingTrainer(cfg, backbone=backbone)
    return trainer.fit(masked, masks, gts, max_steps=max_steps, out_dir=out_dir)
