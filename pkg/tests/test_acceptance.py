"""Acceptance checks, one per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python3 tests/test_acceptance.py`` to print them directly.
"""

import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from maskoff.ablation import ABLATIONS, run_ablation  # noqa: E402
from maskoff.adversarial import ralsgan_losses  # noqa: E402
from maskoff.attention import CSAM, MCSAM, CSAMConfig, MCSAMConfig  # noqa: E402
from maskoff.backbone import SurrogateBackbone  # noqa: E402
from maskoff.config import PRESETS, TrainConfig  # noqa: E402
from maskoff.faces import write_default_templates, write_synthetic_faces  # noqa: E402
from maskoff.imaging import composite, load_image, load_mask  # noqa: E402
from maskoff.losses import FeatureLosses, reconstruction_loss  # noqa: E402
from maskoff.metrics import l1_metric, psnr, ssim  # noqa: E402
from maskoff.segmentation import bce_loss, binarize, iou  # noqa: E402
from maskoff.synthesis import (FaceLandmarks, build_dataset, fit_mask_transform,  # noqa: E402
                               json_landmark_provider, load_templates, read_manifest, transform_rotation)
from maskoff.training import (InpaintingTrainer, SegmentationTrainer, load_triples,  # noqa: E402
                              lr_schedule)
from oracles import (bce_loop, central_difference, inverse_warp_mask, l1_loop, perceptual_loop,  # noqa: E402
                     psnr_loop, ralsgan_scalar, ssim_loop, style_loop)

RESULTS = {}
TITLES = {
    1: "composite exactness",
    2: "attention identities",
    3: "gradient oracles",
    4: "relativistic LS scalar oracle",
    5: "metric oracles",
    6: "dataset self-consistency",
    7: "segmenter overfit",
    8: "inpainter overfit",
    9: "schedule and determinism",
    10: "ablation machinery (informational)",
}
T = lambda a: torch.from_numpy(np.asarray(a, dtype=np.float64))

_desk = {}


def desk_set():
    """16 synthetic 64x64 training triples shared by the overfit checks."""
    if "data" not in _desk:
        root = Path(tempfile.mkdtemp(prefix="maskoff-accept-"))
        lm = write_synthetic_faces(root / "faces", 16, size=64, seed=0)
        tpl = write_default_templates(root / "templates")
        build_dataset(root / "faces", tpl, root / "data", 0, json_landmark_provider(lm), image_size=64)
        _desk["root"] = root
        _desk["manifest"] = root / "data/manifest.jsonl"
        _desk["data"] = load_triples(_desk["manifest"], 64)[:3]
    return _desk["data"]


def criterion_1():
    rng = np.random.default_rng(1)
    bad = 0
    for _ in range(100):
        h, w = rng.integers(1, 33, 2)
        inp, raw = rng.random((h, w, 3)), rng.random((h, w, 3))
        mask = (rng.random((h, w, 1)) < rng.random()).astype(np.float64)
        out = composite(inp, mask, raw)
        sel = mask[..., 0] > 0
        bad += int(not (np.array_equal(out[~sel], inp[~sel]) and np.array_equal(out[sel], raw[sel])))
    return bad == 0, f"{100 - bad}/100 triples bit-exact"


def criterion_2():
    ok = True
    m = CSAM(CSAMConfig(8))
    x = torch.randn(2, 8, 6, 6)
    ok &= torch.equal(m(x), x)
    shapes_ok = True
    for c in (4, 8, 64):
        blk = MCSAM(MCSAMConfig(c, beta_init=0.7))
        shapes_ok &= blk.cfg.branch_channels == c // 4
        for hw in (1, 4, 16):
            xi = torch.randn(1, c, hw, hw)
            shapes_ok &= blk(xi).shape == xi.shape
            shapes_ok &= all(getattr(blk, f"branch{r}")(xi).shape[1] == c // 4 for r in (1, 2, 4, 8))
    ok &= bool(shapes_ok)
    return bool(ok), "beta=0 identity exact; shapes preserved and branch width C/4 for C in {4,8,64}, H,W in {1,4,16}"


def _rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def criterion_3():
    rng = np.random.default_rng(3)
    errs = {}
    a, b = rng.random((1, 3, 4, 4)), rng.random((1, 3, 4, 4))
    x = T(a).requires_grad_(True)
    reconstruction_loss(x, T(b)).backward()
    errs["reconstruction"] = _rel_err(x.grad.numpy(), central_difference(lambda v: l1_loop(v, b), a))

    bb = SurrogateBackbone(widths=(2, 3, 4), seed=3).double()
    fl = FeatureLosses(bb)
    x0, gt = rng.uniform(-1, 1, (1, 3, 4, 4)), T(rng.uniform(-1, 1, (1, 3, 4, 4)))
    for idx, name in ((0, "perceptual"), (1, "style")):
        x = T(x0).requires_grad_(True)
        fl(x, gt)[idx].backward()

        def f(v, idx=idx):
            with torch.no_grad():
                fs, fg = bb(T(v)), bb(gt)
            fs, fg = [t.numpy() for t in fs], [t.numpy() for t in fg]
            return perceptual_loop(fs, fg) if idx == 0 else style_loop(fs, fg)

        errs[name] = _rel_err(x.grad.numpy(), central_difference(f, x0))

    p0, t0 = rng.uniform(0.05, 0.95, (4, 4)), (rng.random((4, 4)) > 0.5).astype(float)
    x = T(p0).requires_grad_(True)
    bce_loss(x, T(t0)).backward()
    errs["bce"] = _rel_err(x.grad.numpy(), central_difference(lambda v: bce_loop(v, t0), p0))

    r0, f0 = rng.standard_normal((1, 1, 3, 3)), rng.standard_normal((1, 1, 3, 3))
    for which in (0, 1):
        tr, tf = T(r0).requires_grad_(True), T(f0).requires_grad_(True)
        ralsgan_losses(tr, tf)[which].backward()
        errs[f"adv_{'gen' if which == 0 else 'disc'}"] = max(
            _rel_err(tf.grad.numpy(), central_difference(lambda v: ralsgan_scalar(r0, v)[which], f0)),
            _rel_err(tr.grad.numpy(), central_difference(lambda v: ralsgan_scalar(v, f0)[which], r0)))
    worst = max(errs.values())
    return worst < 1e-3, "max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items())


def criterion_4():
    g, d = ralsgan_losses(torch.full((2, 1, 4, 4), 0.5, dtype=torch.float64),
                          torch.full((2, 1, 4, 4), -0.5, dtype=torch.float64))
    c = torch.full((2, 1, 4, 4), 0.3, dtype=torch.float64)
    g2, d2 = ralsgan_losses(c, c.clone())
    values_ok = (abs(float(g) + 5) < 1e-9 and abs(float(d) + 1) < 1e-9
                 and abs(float(g2) + 1) < 1e-9 and abs(float(d2) + 1) < 1e-9)
    rng = np.random.default_rng(4)
    # dyadic scores, dyadic shifts and a power-of-two cell count keep every
    # intermediate representable, so invariance can be checked bit for bit
    r = T(rng.integers(-64, 64, (2, 1, 4, 4)) / 16.0)
    f = T(rng.integers(-64, 64, (2, 1, 4, 4)) / 16.0)
    base = ralsgan_losses(r, f)
    inv_ok = all(torch.equal(ralsgan_losses(r + k, f + k)[i], base[i])
                 for k in (0.25, -3.0, 17.5) for i in (0, 1))
    r, f = T(rng.standard_normal((2, 1, 6, 6))), T(rng.standard_normal((2, 1, 6, 6)))
    drift = max(abs(float(ralsgan_losses(r + k, f + k)[i] - ralsgan_losses(r, f)[i]))
                for k in (0.1, -7.3) for i in (0, 1))
    return values_ok and inv_ok, (f"L_gen {float(g):.12g}, L_disc {float(d):.12g}; parity {float(g2):.12g}/"
                                  f"{float(d2):.12g}; shift invariance exact={inv_ok} "
                                  f"(arbitrary floats: drift {drift:.1e})")


def criterion_5():
    rng = np.random.default_rng(5)
    worst = {"ssim": 0.0, "psnr": 0.0, "l1": 0.0}
    for _ in range(50):
        a, b = rng.random((32, 32, 3)), rng.random((32, 32, 3))
        worst["ssim"] = max(worst["ssim"], abs(ssim(a, b) - ssim_loop(a, b)))
        worst["psnr"] = max(worst["psnr"], abs(psnr(a, b) - psnr_loop(a, b)))
        worst["l1"] = max(worst["l1"], abs(l1_metric(a, b) - l1_loop(a, b)))
    a = rng.random((32, 32, 3))
    ident = ssim(a, a) == 1.0 and l1_metric(a, a) == 0.0
    ok = max(worst.values()) < 1e-6 and ident
    return ok, "max abs deviation " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; identities {ident}"


def _rot(theta, cx, cy):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, cx - c * cx + s * cy], [s, c, cy - s * cx - c * cy]])


def criterion_6():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        lm_path = write_synthetic_faces(tmp / "faces", 12, size=64, seed=6)
        tpl_dir = write_default_templates(tmp / "templates")
        build_dataset(tmp / "faces", tpl_dir, tmp / "out", 6, json_landmark_provider(lm_path), image_size=64)
        import json

        marks = json.loads(lm_path.read_text())
        templates = load_templates(tpl_dir)
        rows = read_manifest(tmp / "out/manifest.jsonl")
        consistent = 0
        for row in rows:
            gt, masked, mask = load_image(row["gt"]), load_image(row["masked"]), load_mask(row["mask"])
            tpl = templates[row["template_id"]]
            lm = FaceLandmarks.from_dict(marks[row["source"]])
            oracle = inverse_warp_mask(tpl.rgba[..., 3], fit_mask_transform(lm, tpl), 64, 64)
            keep = mask == 0
            consistent += int(np.array_equal(masked[keep], gt[keep]) and np.array_equal(mask, oracle))
        lm = FaceLandmarks.from_dict(marks[rows[0]["source"]])
        tpl = templates[rows[0]["template_id"]]
        theta0 = transform_rotation(fit_mask_transform(lm, tpl))
        theta = math.radians(30)
        rotated = transform_rotation(fit_mask_transform(lm.transformed(_rot(theta, 32, 32)), tpl))
        err = abs((rotated - theta0) - theta)
    ok = consistent == len(rows) == 12 and err < 1e-3
    return ok, f"{consistent}/{len(rows)} triples consistent; 30 deg rotation error {err:.2e} rad"


def criterion_7():
    masked, masks, _ = desk_set()
    # the overfit preset's epoch length leaves room for the full 500-step budget
    cfg = PRESETS["overfit"].replace(log_every=10 ** 6)
    t0 = time.time()
    tr = SegmentationTrainer(cfg).fit(masked, masks, max_steps=500)
    pred = binarize(tr.predict_proba(masked), cfg.mask_threshold)
    score = float(np.mean([iou(p, m) for p, m in zip(pred, masks)]))
    return score >= 0.95, (f"training-set IoU {score:.4f} after {tr.step} steps ({time.time() - t0:.0f}s); "
                           "full-scale 'over 0.99' not reproduced here")


def criterion_8():
    masked, masks, gts = desk_set()
    cfg = PRESETS["overfit"].replace(log_every=10 ** 6)
    t0 = time.time()
    tr = InpaintingTrainer(cfg).fit(masked, masks, gts)
    syn, _ = tr.inpaint(masked, masks)
    ml1 = float(np.mean([np.abs(s - g)[m > 0].mean() for s, g, m in zip(syn, gts, masks)]))
    score = float(np.mean([ssim(s, g) for s, g in zip(syn, gts)]))
    ok = ml1 < 0.05 and score > 0.85 and tr.step <= 2000
    return ok, f"masked-region l1 {ml1:.4f}, SSIM {score:.4f} after {tr.step} steps ({time.time() - t0:.0f}s)"


def criterion_9():
    cfg = TrainConfig()
    lrs = [lr_schedule(cfg, e) for e in (1, 20, 21, 30)]
    sched_ok = all(abs(a - b) < 1e-15 for a, b in zip(lrs, (2e-4, 2e-4, 1.98e-4, 1.8e-4)))
    masked, masks, gts = desk_set()
    small = TrainConfig(deterministic=True, image_size=64, batch_size=4, gen_base_width=8,
                        disc_base_width=8, steps_per_epoch=3, epochs=4, log_every=10 ** 6)
    n = 8
    data = (masked[:n], masks[:n], gts[:n])
    full = InpaintingTrainer(small).fit(*data, max_steps=7)
    with tempfile.TemporaryDirectory() as tmp:
        InpaintingTrainer(small).fit(*data, max_steps=4, out_dir=tmp)
        resumed = InpaintingTrainer.from_checkpoint(Path(tmp) / "last.ckpt").fit(*data, max_steps=7)
    pa, pb = full.state_dict()["params"], resumed.state_dict()["params"]
    bit_equal = all(torch.equal(pa[k], pb[k]) for k in pa)
    same_next = resumed.history[0]["loss"] == full.history[4]["loss"]
    return sched_ok and bit_equal and same_next, (
        "lr at epochs 1,20,21,30 = " + ", ".join(f"{v:.3g}" for v in lrs)
        + f"; split at step 4 and resumed: params bit-identical={bit_equal}, next-step loss equal={same_next}")


def criterion_10():
    desk_set()
    cfg = PRESETS["desk"].replace(log_every=10 ** 6)
    out = _desk["root"] / "ablations"
    budgets = {"local_vs_full": 300, "csam": 20, "multiscale": 20}
    tables = {}
    for preset, steps in budgets.items():
        res = run_ablation(preset, cfg, _desk["manifest"], out, max_steps=steps)
        tables[preset] = res
    emitted = all((out / f"ablation_{p}.txt").exists() and len(tables[p].summaries) == 2 for p in ABLATIONS)
    lvf = tables["local_vs_full"].masked_l1
    local, full = lvf["local supervision"], lvf["full supervision"]
    direction = "local <= full" if local <= full else "local > full"
    return emitted, (f"3 presets emitted paired tables; local_vs_full masked l1 local {local:.4f} vs "
                     f"full {full:.4f} ({direction}, informational, 300 steps)")


CHECKS = {i: globals()[f"criterion_{i}"] for i in TITLES}


def _record(i):
    ok, detail = CHECKS[i]()
    RESULTS[i] = (bool(ok), detail)
    return ok, detail


@pytest.mark.parametrize("number", sorted(TITLES))
def test_acceptance(number):
    ok, detail = _record(number)
    print(f"{'PASS' if ok else 'FAIL'} criterion {number} ({TITLES[number]}): {detail}")
    assert ok, detail


if __name__ == "__main__":
    failures = 0
    for i in sorted(TITLES):
        ok, detail = _record(i)
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'} criterion {i} ({TITLES[i]}): {detail}", flush=True)
    sys.exit(1 if failures else 0)
