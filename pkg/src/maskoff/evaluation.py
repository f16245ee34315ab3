"""Dataset-level evaluation and report rendering."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .metrics import PSNR_CAP, is_exact_match, l1_metric, psnr, ssim

MASK_SOURCES = ("gt", "predicted")

# Full-scale results at 256x256 on the 19,026-image validation split; shown
# for reference only, desk runs are not expected to match them.
REFERENCE_RESULTS = {
    "full_model": (0.9511, 30.3885, 0.0076),
    "csam_no_multiscale": (0.9454, 29.6126, 0.0084),
    "full_supervision": (0.9441, 29.6932, 0.0088),
    "no_csam": (0.9495, 30.1338, 0.0077),
}


@dataclass
class ImageScore:
    name: str
    ssim: float
    psnr: float
    l1: float
    exact: bool = False

    def to_dict(self) -> dict:
        return {"name": self.name, "ssim": self.ssim, "psnr": self.psnr,
                "l1": self.l1, "exact": self.exact}


@dataclass
class Report:
    header: dict
    images: List[ImageScore] = field(default_factory=list)

    @property
    def summary(self) -> dict:
        if not self.images:
            return {"count": 0, "ssim": float("nan"), "psnr": float("nan"), "l1": float("nan")}
        return {
            "count": len(self.images),
            "ssim": float(np.mean([s.ssim for s in self.images])),
            "psnr": float(np.mean([s.psnr for s in self.images])),
            "l1": float(np.mean([s.l1 for s in self.images])),
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "header", **self.header}, sort_keys=True)]
        lines += [json.dumps({"type": "image", **s.to_dict()}, sort_keys=True) for s in self.images]
        lines.append(json.dumps({"type": "summary", **self.summary}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path: Union[str, os.PathLike]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: Union[str, os.PathLike]) -> "Report":
        header, images = {}, []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            row = json.loads(line)
            kind = row.pop("type")
            if kind == "header":
                header = row
            elif kind == "image":
                images.append(ImageScore(**row))
        return cls(header, images)


def score_image(name: str, syn: np.ndarray, gt: np.ndarray) -> ImageScore:
    return ImageScore(name, ssim(syn, gt), psnr(syn, gt), l1_metric(syn, gt), is_exact_match(syn, gt))


def score_pairs(names: Sequence[str], syn: np.ndarray, gt: np.ndarray, header: dict) -> Report:
    report = Report(dict(header))
    for name, s, g in zip(names, syn, gt):
        report.images.append(score_image(name, s, g))
    return report


def render_table(rows: Dict[str, dict], title: str = "") -> str:
    """Three-column table (SSIM+, PSNR+, l1- loss) with one row per method."""
    name_w = max([len(n) for n in rows] + [8])
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'':<{name_w}}  {'SSIM+':>8}  {'PSNR+':>8}  {'l1- loss':>8}")
    lines.append("-" * (name_w + 32))
    for name, r in rows.items():
        lines.append(f"{name:<{name_w}}  {r['ssim']:>8.4f}  {r['psnr']:>8.4f}  {r['l1']:>8.4f}")
    return "\n".join(lines)


def evaluate_set(manifest, checkpoint, mask_source: str = "gt", seg_checkpoint=None,
                 out: Optional[Union[str, os.PathLike]] = None) -> Report:
    """Score composites of an inpainter checkpoint against ground truth.

    ``mask_source="predicted"`` replaces the manifest masks with the
    binarized output of the segmenter in ``seg_checkpoint``.
    """
    from .training import inpaint_arrays, load_generator, load_segmenter, load_triples, segment_arrays
    from .segmentation import binarize, iou

    if mask_source not in MASK_SOURCES:
        raise ValueError(f"mask_source must be one of {MASK_SOURCES}")
    if mask_source == "predicted" and seg_checkpoint is None:
        raise ValueError("mask_source='predicted' needs a segmenter checkpoint")
    generator = load_generator(checkpoint)
    size = generator.cfg.input_size
    masked, masks, gts, rows = load_triples(manifest, size)
    header = {"manifest": str(manifest), "checkpoint": str(checkpoint),
              "mask_source": mask_source, "image_size": size,
              "psnr_cap": PSNR_CAP, "space": "[0,1] whole-image composite"}
    if mask_source == "predicted":
        seg, seg_cfg = load_segmenter(seg_checkpoint)
        if seg_cfg.image_size != size:
            raise ValueError(f"segmenter input size {seg_cfg.image_size} != inpainter size {size}")
        pred = binarize(segment_arrays(seg, masked), seg_cfg.mask_threshold)
        header["seg_checkpoint"] = str(seg_checkpoint)
        header["mask_iou"] = float(np.mean([iou(p, m) for p, m in zip(pred, masks)]))
        masks = pred
    syn, _ = inpaint_arrays(generator, masked, masks)
    names = [Path(r["gt"]).name for r in rows]
    report = score_pairs(names, syn, gts, header)
    if out is not None:
        report.write(out)
    return report

