"""Procedural faces and mask templates for offline, desk-scale work.

The faces are simple cartoon portraits whose 21 landmarks are known in
closed form, so they double as a deterministic landmark provider. The five
templates follow the template registry layout used by
:func:`maskoff.synthesis.load_templates`.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .imaging import save_image
from .synthesis import FaceLandmarks, MaskTemplate, TEMPLATE_IDS, save_templates

TEMPLATE_SIZE = (120, 160)  # height, width


def _coverage(sd: np.ndarray, softness: float = 1.0) -> np.ndarray:
    """Anti-aliased coverage from a signed distance in pixels (negative inside)."""
    return np.clip(0.5 - sd / softness, 0.0, 1.0)


def _ellipse_sd(u, v, cu, cv, ru, rv):
    r = np.sqrt(((u - cu) / ru) ** 2 + ((v - cv) / rv) ** 2)
    return (r - 1.0) * min(ru, rv)


def _paint(img, cover, color):
    img[:] = img * (1 - cover[..., None]) + np.asarray(color)[None, None] * cover[..., None]


def canonical_landmarks(a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    """Nose-bridge and jaw points in the face frame (origin at face centre, v down)."""
    nose = np.stack([np.zeros(4), np.linspace(-0.1 * b, 0.22 * b, 4)], axis=1)
    t = np.pi - np.arange(17) * np.pi / 16
    chin = np.stack([a * np.cos(t), b * np.sin(t)], axis=1)
    return nose, chin


def render_face(size: int, rng: np.random.Generator) -> Tuple[np.ndarray, FaceLandmarks]:
    """One random portrait (``size x size x 3`` in [0, 1]) and its landmarks."""
    a = size * rng.uniform(0.25, 0.30)
    b = a * rng.uniform(1.25, 1.38)
    center = np.array([size / 2 + rng.uniform(-0.04, 0.04) * size,
                       size / 2 + rng.uniform(0.0, 0.05) * size])
    theta = np.deg2rad(rng.uniform(-12.0, 12.0))
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xs - center[0], ys - center[1]
    u = c * dx + s * dy
    v = -s * dx + c * dy
    soft = max(size / 128.0, 0.5)

    top = rng.uniform(0.2, 0.8, 3)
    bottom = rng.uniform(0.2, 0.8, 3)
    img = top[None, None] + (bottom - top)[None, None] * (ys / (size - 1))[..., None]

    hair = rng.uniform(0.05, 0.55) * np.array([1.0, rng.uniform(0.6, 0.9), rng.uniform(0.4, 0.7)])
    hair_sd = _ellipse_sd(u, v, 0, -0.12 * b, 1.15 * a, 1.05 * b)
    _paint(img, _coverage(hair_sd, soft) * (v < 0.25 * b), hair)

    skin = np.array([rng.uniform(0.55, 0.95), 0, 0])
    skin[1] = skin[0] * rng.uniform(0.72, 0.85)
    skin[2] = skin[0] * rng.uniform(0.55, 0.72)
    face_sd = _ellipse_sd(u, v, 0, 0, a, b)
    shade = 1.0 - 0.18 * np.clip((u / a) ** 2 + (v / b) ** 2, 0, 1)
    face_cover = _coverage(face_sd, soft)
    img[:] = img * (1 - face_cover[..., None]) + (skin[None, None] * shade[..., None]) * face_cover[..., None]

    fringe = _ellipse_sd(u, v, 0, -1.02 * b, 1.05 * a, 0.55 * b)
    _paint(img, _coverage(fringe, soft), hair)

    eye_v = -0.15 * b
    iris = rng.uniform(0.05, 0.4) * np.array([0.6, 0.8, 1.0])
    for side in (-1, 1):
        eu = side * 0.38 * a
        _paint(img, _coverage(_ellipse_sd(u, v, eu, eye_v, 0.17 * a, 0.08 * b), soft), (0.95, 0.95, 0.95))
        _paint(img, _coverage(_ellipse_sd(u, v, eu, eye_v, 0.07 * a, 0.07 * a), soft), iris)
        brow = _ellipse_sd(u, v, eu, eye_v - 0.15 * b, 0.2 * a, 0.025 * b)
        _paint(img, _coverage(brow, soft), hair * 0.8)

    nose_line = np.maximum(np.abs(u) - 0.035 * a, np.abs(v - 0.08 * b) - 0.18 * b)
    _paint(img, 0.5 * _coverage(nose_line, soft), skin * 0.7)
    for side in (-1, 1):
        nostril = _ellipse_sd(u, v, side * 0.09 * a, 0.27 * b, 0.05 * a, 0.03 * b)
        _paint(img, _coverage(nostril, soft), skin * 0.45)

    lips = np.array([rng.uniform(0.55, 0.85), rng.uniform(0.2, 0.4), rng.uniform(0.25, 0.45)])
    mouth_w = rng.uniform(0.25, 0.35) * a
    _paint(img, _coverage(_ellipse_sd(u, v, 0, 0.55 * b, mouth_w, 0.07 * b), soft), lips)
    _paint(img, _coverage(np.abs(v - 0.55 * b) - 0.008 * b + np.maximum(np.abs(u) - mouth_w, 0), soft),
           lips * 0.5)

    nose, chin = canonical_landmarks(a, b)
    to_img = lambda p: p @ rot.T + center
    return np.clip(img, 0.0, 1.0), FaceLandmarks(to_img(nose), to_img(chin))


def synthetic_faces(n: int, size: int = 64, seed: int = 0) -> Tuple[np.ndarray, List[FaceLandmarks]]:
    rng = np.random.default_rng(seed)
    faces, marks = [], []
    for _ in range(n):
        img, lm = render_face(size, rng)
        faces.append(img)
        marks.append(lm)
    return np.stack(faces), marks


def write_synthetic_faces(out_dir, n: int, size: int = 256, seed: int = 0,
                          missing: Optional[set] = None) -> Path:
    """Write ``face_XXXXX.png`` files plus ``landmarks.json``; returns that JSON path.

    Indices listed in ``missing`` get a ``null`` landmark entry, mimicking a
    detector that fails on those faces.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    faces, marks = synthetic_faces(n, size, seed)
    table: Dict[str, Optional[dict]] = {}
    for i, (img, lm) in enumerate(zip(faces, marks)):
        name = f"face_{i:05d}.png"
        save_image(out_dir / name, img)
        table[name] = None if missing and i in missing else lm.to_dict()
    path = out_dir / "landmarks.json"
    path.write_text(json.dumps(table, indent=1), encoding="utf-8")
    return path


_TEMPLATE_STYLES = {
    "surgical": dict(color=(0.55, 0.74, 0.9), top=24, curve=8, pattern="pleats"),
    "cloth_dark": dict(color=(0.13, 0.13, 0.16), top=18, curve=14, pattern=None),
    "cloth_pattern": dict(color=(0.78, 0.2, 0.22), top=20, curve=12, pattern="dots"),
    "n95": dict(color=(0.93, 0.93, 0.9), top=16, curve=22, pattern="seam"),
    "scarf": dict(color=(0.25, 0.5, 0.32), top=30, curve=4, pattern="stripes"),
}


def make_template(tid: str) -> MaskTemplate:
    style = _TEMPLATE_STYLES[tid]
    h, w = TEMPLATE_SIZE
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    cx = (w - 1) / 2
    half = cx - 2
    xn = (xs - cx) / half
    top_edge = style["top"] + style["curve"] * xn ** 2
    lower = np.sqrt(np.clip(((xs - cx) / half) ** 2 + ((ys - 40) / (h - 3 - 40)) ** 2, 0, None)) - 1
    sd = np.maximum(top_edge - ys, np.where(ys > 40, lower * 40, np.abs(xn) * half - half))
    alpha = _coverage(sd, 1.0)

    color = np.ones((h, w, 3)) * np.asarray(style["color"])[None, None]
    pattern = style["pattern"]
    if pattern == "pleats":
        for y0 in (45, 60, 75):
            color[np.abs(ys - y0 - 3 * xn ** 2) < 1.2] *= 0.8
    elif pattern == "dots":
        dots = ((xs % 14 - 7) ** 2 + (ys % 14 - 7) ** 2) < 9
        color[dots] = (0.95, 0.9, 0.85)
    elif pattern == "seam":
        color[np.abs(xs - cx) < 1.0] *= 0.85
    elif pattern == "stripes":
        color[(ys // 8) % 2 == 0] *= 0.7
    rgba = np.concatenate([color, alpha[..., None]], axis=2)
    return MaskTemplate(tid, np.clip(rgba, 0, 1), (cx, 2.0), (cx, h - 3.0), (2.0, 40.0), (w - 3.0, 40.0))


def default_templates() -> Dict[str, MaskTemplate]:
    return {tid: make_template(tid) for tid in TEMPLATE_IDS}


def write_default_templates(templates_dir) -> Path:
    templates_dir = Path(templates_dir)
    save_templates(default_templates().values(), templates_dir)
    return templates_dir
