"""Command-line interface.

Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional


log = logging.getLogger("maskoff")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--config", default=d(None), help="key = value config file")
    p.add_argument("--preset", default=d("desk"), help="desk | overfit | full")
    p.add_argument("--seed", type=int, default=d(None))
    p.add_argument("--deterministic", action="store_true", default=d(False))
    p.add_argument("--set", action="append", default=d([]), metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maskoff", description="Face-mask removal by region-attentive inpainting.",
                     parents=[_global_flags(True)])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)
    common = [_global_flags(False)]

    p = sub.add_parser("synth", parents=common, help="build a masked-face dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--faces-dir", help="directory of face images")
    src.add_argument("--synthetic", type=int, metavar="N", help="generate N procedural faces")
    p.add_argument("--landmarks", help="JSON landmarks file (default: <faces-dir>/landmarks.json)")
    p.add_argument("--templates-dir", help="template registry (default: built-in templates)")
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=256)

    p = sub.add_parser("train-seg", parents=common, help="train the mask segmenter")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--steps", type=int)

    p = sub.add_parser("train-inpaint", parents=common, help="train the inpainting network")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--steps", type=int)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--backbone-weights", help="VGG-16 weights file")

    p = sub.add_parser("eval", parents=common, help="score an inpainter on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mask-source", choices=("gt", "predicted"), default="gt")
    p.add_argument("--seg-checkpoint", help="default: segmenter.ckpt beside --checkpoint")
    p.add_argument("--report", help="write the JSONL report here")

    p = sub.add_parser("infer", parents=common, help="remove the mask from one image")
    p.add_argument("--image", required=True)
    p.add_argument("--checkpoint", required=True)
    m = p.add_mutually_exclusive_group(required=True)
    m.add_argument("--seg-checkpoint")
    m.add_argument("--mask", help="binary mask PNG instead of a segmenter")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", parents=common, help="run a paired ablation")
    p.add_argument("--ablation", required=True, choices=("local_vs_full", "csam", "multiscale"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--eval-manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    return parser


def _config(args):
    from .config import load_config

    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key] = value
    from .config import parse_overrides

    try:
        values = parse_overrides(overrides)
        if args.seed is not None:
            values["seed"] = args.seed
        if args.deterministic:
            values["deterministic"] = True
        if getattr(args, "backbone_weights", None):
            values["backbone_weights"] = args.backbone_weights
        return load_config(args.config, args.preset, **values)
    except (ValueError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_synth(args) -> int:
    from .faces import write_default_templates, write_synthetic_faces
    from .synthesis import build_dataset, json_landmark_provider

    out = Path(args.out)
    seed = args.seed if args.seed is not None else 0
    if args.synthetic is not None:
        faces_dir = out / "faces"
        landmarks = write_synthetic_faces(faces_dir, args.synthetic, args.image_size, seed)
    else:
        faces_dir = Path(args.faces_dir)
        landmarks = Path(args.landmarks) if args.landmarks else faces_dir / "landmarks.json"
        if not landmarks.is_file():
            raise UsageError(f"landmarks file not found: {landmarks}")
    templates = Path(args.templates_dir) if args.templates_dir else write_default_templates(out / "templates")
    records = build_dataset(faces_dir, templates, out, seed, json_landmark_provider(landmarks),
                            image_size=args.image_size)
    found = sum(r.status == "found" for r in records)
    print(f"wrote {found} triples ({len(records) - found} skipped) to {out / 'manifest.jsonl'}")
    return EXIT_OK


def cmd_train_seg(args) -> int:
    from .training import train_segmenter

    cfg = _config(args)
    trainer = train_segmenter(cfg, args.manifest, out_dir=args.out, max_steps=args.steps)
    last = trainer.history[-1] if trainer.history else {}
    print(f"segmenter: {trainer.step} steps, bce {last.get('bce', float('nan')):.5f}, "
          f"iou {last.get('iou', float('nan')):.4f} -> {Path(args.out) / 'segmenter.ckpt'}")
    return EXIT_OK


def cmd_train_inpaint(args) -> int:
    from .training import train_inpainter

    cfg = _config(args)
    trainer = train_inpainter(cfg, args.manifest, out_dir=args.out, resume=args.resume,
                              max_steps=args.steps)
    last = trainer.history[-1] if trainer.history else {}
    print(f"inpainter: {trainer.step} steps, masked l1 {last.get('masked_l1', float('nan')):.4f} "
          f"-> {Path(args.out) / 'last.ckpt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import evaluate_set, render_table

    seg = args.seg_checkpoint
    if args.mask_source == "predicted" and not seg:
        sibling = Path(args.checkpoint).with_name("segmenter.ckpt")
        if not sibling.is_file():
            raise UsageError("--mask-source predicted needs --seg-checkpoint "
                             f"(no {sibling} next to the checkpoint)")
        seg = sibling
    report = evaluate_set(args.manifest, args.checkpoint, args.mask_source, seg, out=args.report)
    print(f"mask source: {args.mask_source}")
    print(render_table({"model": report.summary}))
    return EXIT_OK


def cmd_infer(args) -> int:
    from .imaging import load_image, load_mask, resize_image, resize_mask, save_image, save_mask
    from .segmentation import binarize
    from .training import inpaint_arrays, load_generator, load_segmenter, segment_arrays

    generator = load_generator(args.checkpoint)
    size = generator.cfg.input_size
    img = resize_image(load_image(args.image, 3), size)
    if args.mask:
        mask = resize_mask(load_mask(args.mask), size)
    else:
        seg, seg_cfg = load_segmenter(args.seg_checkpoint)
        if seg_cfg.image_size != size:
            raise ValueError(f"segmenter size {seg_cfg.image_size} != inpainter size {size}")
        mask = binarize(segment_arrays(seg, img[None]), seg_cfg.mask_threshold)[0]
    syn, _ = inpaint_arrays(generator, img[None], mask[None])
    out = Path(args.out)
    save_image(out, syn[0])
    mask_path = out.with_name(out.stem + ".mask.png")
    save_mask(mask_path, mask)
    print(f"wrote {out} and {mask_path}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .ablation import run_ablation

    cfg = _config(args)
    result = run_ablation(args.ablation, cfg, args.manifest, args.out,
                          eval_manifest=args.eval_manifest, max_steps=args.steps)
    print(result.table())
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth, "train-seg": cmd_train_seg, "train-inpaint": cmd_train_inpaint,
    "eval": cmd_eval, "infer": cmd_infer, "ablate": cmd_ablate,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"maskoff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.debug("command failed", exc_info=True)
        print(f"maskoff: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
