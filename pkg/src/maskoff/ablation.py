"""Paired ablation runs: two configurations trained on identical data order and
scored with the same evaluation path."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .config import TrainConfig
from .evaluation import REFERENCE_RESULTS, evaluate_set, render_table
from .training import inpaint_arrays, load_generator, load_triples, train_inpainter

log = logging.getLogger(__name__)

# preset -> ((arm label, config overrides, reference key), ...)
ABLATIONS = {
    "local_vs_full": (
        ("local supervision", {"supervision_mode": "local"}, "full_model"),
        ("full supervision", {"supervision_mode": "full"}, "full_supervision"),
    ),
    "csam": (
        ("w/ CSAM", {"attention_mode": "mcsam"}, "full_model"),
        ("w/o CSAM", {"attention_mode": "none"}, "no_csam"),
    ),
    "multiscale": (
        ("M-CSAM", {"attention_mode": "mcsam"}, "full_model"),
        ("CSAM", {"attention_mode": "csam_only"}, "csam_no_multiscale"),
    ),
}


@dataclass
class AblationResult:
    preset: str
    summaries: Dict[str, dict] = field(default_factory=dict)
    masked_l1: Dict[str, float] = field(default_factory=dict)
    checkpoints: Dict[str, str] = field(default_factory=dict)

    def table(self) -> str:
        body = render_table(self.summaries, f"ablation: {self.preset} (desk scale)")
        refs = {label: dict(zip(("ssim", "psnr", "l1"), REFERENCE_RESULTS[key]))
                for label, _, key in ABLATIONS[self.preset]}
        footer = render_table(refs, "reference (full scale, 256x256, 19,026 validation images):")
        l1_lines = ["masked-region l1 (informational): " + ", ".join(
            f"{k} {v:.4f}" for k, v in self.masked_l1.items())]
        return "\n".join([body, "", footer, "", *l1_lines])


def masked_region_l1(checkpoint, manifest) -> float:
    gen = load_generator(checkpoint)
    masked, masks, gts, _ = load_triples(manifest, gen.cfg.input_size)
    syn, _ = inpaint_arrays(gen, masked, masks)
    return float(np.mean([np.abs(s - g)[m > 0].mean() for s, g, m in zip(syn, gts, masks) if m.any()]))


def run_ablation(preset: str, cfg: TrainConfig, manifest, out_dir,
                 eval_manifest=None, max_steps: Optional[int] = None,
                 backbone=None) -> AblationResult:
    """Train both arms of ``preset`` from the same seed and data order and
    compare them on ``eval_manifest`` (defaults to the training manifest)."""
    if preset not in ABLATIONS:
        raise ValueError(f"unknown ablation preset {preset!r}; choose from {sorted(ABLATIONS)}")
    out_dir = Path(out_dir)
    eval_manifest = eval_manifest or manifest
    result = AblationResult(preset)
    for label, overrides, _ in ABLATIONS[preset]:
        arm_dir = out_dir / preset / label.replace(" ", "_").replace("/", "")
        arm_cfg = cfg.replace(**overrides)
        log.info("ablation %s: training arm %r", preset, label)
        train_inpainter(arm_cfg, manifest, out_dir=arm_dir, max_steps=max_steps, backbone=backbone)
        ck = arm_dir / "last.ckpt"
        report = evaluate_set(eval_manifest, ck, out=arm_dir / "report.jsonl")
        result.summaries[label] = report.summary
        result.masked_l1[label] = masked_region_l1(ck, eval_manifest)
        result.checkpoints[label] = str(ck)
    (out_dir / f"ablation_{preset}.txt").write_text(result.table() + "\n", encoding="utf-8")
    if preset == "local_vs_full":
        (local, full) = (result.masked_l1[a[0]] for a in ABLATIONS[preset])
        log.info("local %s full supervision in masked-region l1 (%.4f vs %.4f)",
                 "<=" if local <= full else ">", local, full)
    return result
