"""Masked-face dataset synthesis.

A mask template (RGBA image plus four anchor points) is placed on a face by an
affine transform fitted to 21 landmarks: 4 along the nose bridge (top to
bottom) and 17 along the jaw (left to right). The template's top anchor lands
on the top of the nose bridge, its bottom anchor on the chin apex (9th jaw
point), and its width is scaled to the distance between the jaw extremes
(1st and 17th jaw points) measured across the face axis.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .imaging import ImageIOError, load_image, resize_image, save_image, save_mask

log = logging.getLogger(__name__)

TEMPLATE_IDS = ("surgical", "cloth_dark", "cloth_pattern", "n95", "scarf")
ANCHORS_FILENAME = "anchors.txt"
MANIFEST_FIELDS = ("gt", "masked", "mask", "template_id", "status")
ALPHA_THRESHOLD = 0.5


class MaskOutOfFrameError(ValueError):
    pass


class DegenerateLandmarksError(ValueError):
    pass


@dataclass(frozen=True)
class FaceLandmarks:
    """Nose bridge (4 x 2, top to bottom) and jaw (17 x 2, left to right) points in pixels."""

    nose_bridge: np.ndarray
    chin: np.ndarray

    def __post_init__(self):
        nose = np.asarray(self.nose_bridge, dtype=np.float64)
        chin = np.asarray(self.chin, dtype=np.float64)
        if nose.shape != (4, 2) or chin.shape != (17, 2):
            raise ValueError(
                f"expected 4 nose-bridge and 17 chin points, got {nose.shape} and {chin.shape}"
            )
        object.__setattr__(self, "nose_bridge", nose)
        object.__setattr__(self, "chin", chin)

    @property
    def nose_top(self) -> np.ndarray:
        return self.nose_bridge[0]

    @property
    def chin_apex(self) -> np.ndarray:
        return self.chin[8]

    def points(self) -> np.ndarray:
        return np.concatenate([self.nose_bridge, self.chin])

    def check_bounds(self, height: int, width: int) -> None:
        pts = self.points()
        if (pts < 0).any() or (pts[:, 0] > width - 1).any() or (pts[:, 1] > height - 1).any():
            raise ValueError("landmarks fall outside the image")

    def transformed(self, matrix: np.ndarray) -> "FaceLandmarks":
        """Apply a 2x3 affine map to every point."""
        m = np.asarray(matrix, dtype=np.float64)
        f = lambda p: p @ m[:, :2].T + m[:, 2]
        return FaceLandmarks(f(self.nose_bridge), f(self.chin))

    def to_dict(self) -> dict:
        return {"nose_bridge": self.nose_bridge.tolist(), "chin": self.chin.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FaceLandmarks":
        return cls(np.asarray(d["nose_bridge"]), np.asarray(d["chin"]))


@dataclass(frozen=True)
class MaskTemplate:
    id: str
    rgba: np.ndarray
    anchor_top: tuple
    anchor_bottom: tuple
    anchor_left: tuple
    anchor_right: tuple

    def __post_init__(self):
        rgba = np.asarray(self.rgba, dtype=np.float64)
        if rgba.ndim != 3 or rgba.shape[2] != 4:
            raise ValueError(f"template {self.id!r} must be H x W x 4, got {rgba.shape}")
        if rgba.min() < 0 or rgba.max() > 1:
            raise ValueError(f"template {self.id!r} values must lie in [0, 1]")
        h, w = rgba.shape[:2]
        for name in ("anchor_top", "anchor_bottom", "anchor_left", "anchor_right"):
            x, y = getattr(self, name)
            if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
                raise ValueError(f"template {self.id!r}: {name} ({x}, {y}) outside {w}x{h}")
        object.__setattr__(self, "rgba", rgba)

    @property
    def height_span(self) -> float:
        return float(self.anchor_bottom[1] - self.anchor_top[1])

    @property
    def width_span(self) -> float:
        return float(self.anchor_right[0] - self.anchor_left[0])


def fit_mask_transform(lm: FaceLandmarks, tpl: MaskTemplate) -> np.ndarray:
    """Affine map (2 x 3) from template pixel coordinates to image coordinates.

    The face's vertical axis runs from the top of the nose bridge to the chin
    apex; the template is rotated so its vertical axis follows it, scaled
    vertically so ``anchor_top``/``anchor_bottom`` land exactly on those two
    points, and scaled horizontally so the left/right anchor separation equals
    the jaw width measured perpendicular to the axis.
    """
    top = lm.nose_top
    axis = lm.chin_apex - top
    height = float(np.hypot(*axis))
    if height < 1e-9:
        raise DegenerateLandmarksError("nose top and chin apex coincide")
    if tpl.height_span <= 0 or tpl.width_span <= 0:
        raise DegenerateLandmarksError(f"template {tpl.id!r} has degenerate anchors")
    down = axis / height
    across = np.array([down[1], -down[0]])
    width = float(np.dot(lm.chin[16] - lm.chin[0], across))
    if width <= 1e-9:
        raise DegenerateLandmarksError("jaw extremes coincide or are reversed")

    sx = width / tpl.width_span
    sy = height / tpl.height_span
    linear = np.column_stack([across * sx, down * sy])
    offset = top - linear @ np.asarray(tpl.anchor_top, dtype=np.float64)
    return np.column_stack([linear, offset])


def transform_rotation(matrix: np.ndarray) -> float:
    """Rotation angle (radians) of the template x-axis under ``matrix``."""
    return float(np.arctan2(matrix[1, 0], matrix[0, 0]))


def transform_scales(matrix: np.ndarray) -> tuple:
    """(horizontal, vertical) scale factors of ``matrix``."""
    return float(np.hypot(matrix[0, 0], matrix[1, 0])), float(np.hypot(matrix[0, 1], matrix[1, 1]))


def warp_rgba(rgba: np.ndarray, matrix: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinearly resample an RGBA template into an ``height x width`` canvas.

    Each output pixel centre is pulled back through the inverse of ``matrix``;
    samples falling outside the template read as fully transparent black.
    """
    a = np.asarray(matrix, dtype=np.float64)
    inv = np.linalg.inv(a[:, :2])
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = xs - a[0, 2]
    dy = ys - a[1, 2]
    u = inv[0, 0] * dx + inv[0, 1] * dy
    v = inv[1, 0] * dx + inv[1, 1] * dy

    th, tw = rgba.shape[:2]
    u0 = np.floor(u)
    v0 = np.floor(v)
    fu = u - u0
    fv = v - v0
    u0 = u0.astype(np.int64)
    v0 = v0.astype(np.int64)

    def tap(yy, xx):
        ok = (xx >= 0) & (xx < tw) & (yy >= 0) & (yy < th)
        out = np.zeros((height, width, rgba.shape[2]))
        out[ok] = rgba[yy[ok], xx[ok]]
        return out

    w00 = ((1 - fu) * (1 - fv))[..., None]
    w01 = (fu * (1 - fv))[..., None]
    w10 = ((1 - fu) * fv)[..., None]
    w11 = (fu * fv)[..., None]
    return (w00 * tap(v0, u0) + w01 * tap(v0, u0 + 1)
            + w10 * tap(v0 + 1, u0) + w11 * tap(v0 + 1, u0 + 1))


def overlay_mask(face: np.ndarray, tpl: MaskTemplate, matrix: np.ndarray):
    """Paste ``tpl`` onto ``face``; returns ``(masked, mask)``.

    Pixels whose warped alpha is at least 0.5 take the warped template colour
    and are marked 1 in the mask; every other pixel is copied from ``face``.
    """
    h, w = face.shape[:2]
    premult = tpl.rgba.copy()
    premult[..., :3] *= premult[..., 3:]
    warped = warp_rgba(premult, matrix, h, w)
    alpha = warped[..., 3]
    mask = (alpha >= ALPHA_THRESHOLD).astype(np.float64)
    if not mask.any():
        raise MaskOutOfFrameError("mask out of frame: the placed template covers no pixel")
    color = np.clip(warped[..., :3] / np.maximum(alpha, ALPHA_THRESHOLD)[..., None], 0.0, 1.0)
    masked = np.where(mask[..., None] > 0, color, face)
    return masked, mask


# --- template registry -------------------------------------------------------

def load_templates(templates_dir: Union[str, os.PathLike]) -> Dict[str, MaskTemplate]:
    """Read ``<id>.png`` RGBA files and the ``anchors.txt`` sidecar.

    Sidecar lines are ``id top_x top_y bottom_x bottom_y left_x left_y right_x right_y``;
    blank lines and ``#`` comments are ignored.
    """
    templates_dir = Path(templates_dir)
    sidecar = templates_dir / ANCHORS_FILENAME
    if not sidecar.is_file():
        raise FileNotFoundError(f"template anchor file missing: {sidecar}")
    registry = {}
    for lineno, line in enumerate(sidecar.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 9:
            raise ValueError(f"{sidecar}:{lineno}: expected 9 fields, got {len(parts)}")
        tid, coords = parts[0], [float(x) for x in parts[1:]]
        rgba = load_image(templates_dir / f"{tid}.png", expected_channels=4)
        registry[tid] = MaskTemplate(
            tid, rgba, tuple(coords[0:2]), tuple(coords[2:4]), tuple(coords[4:6]), tuple(coords[6:8])
        )
    if len(registry) != len(TEMPLATE_IDS):
        raise ValueError(f"expected {len(TEMPLATE_IDS)} templates, found {len(registry)} in {sidecar}")
    return registry


def save_templates(templates: Iterable[MaskTemplate], templates_dir: Union[str, os.PathLike]) -> None:
    templates_dir = Path(templates_dir)
    templates_dir.mkdir(parents=True, exist_ok=True)
    lines = ["# id top_x top_y bottom_x bottom_y left_x left_y right_x right_y"]
    for tpl in templates:
        save_image(templates_dir / f"{tpl.id}.png", tpl.rgba)
        coords = [*tpl.anchor_top, *tpl.anchor_bottom, *tpl.anchor_left, *tpl.anchor_right]
        lines.append(" ".join([tpl.id] + [f"{c:g}" for c in coords]))
    (templates_dir / ANCHORS_FILENAME).write_text("\n".join(lines) + "\n", encoding="utf-8")


def choose_template(seed: int, index: int, ids: Sequence[str] = TEMPLATE_IDS) -> str:
    """Uniform template pick keyed by ``(seed, index)``, independent of processing order."""
    rng = np.random.default_rng([seed, index])
    return ids[int(rng.integers(len(ids)))]


# --- dataset -----------------------------------------------------------------

@dataclass
class DatasetRecord:
    source: str
    template_id: Optional[str]
    status: str
    gt: Optional[str] = None
    masked: Optional[str] = None
    mask: Optional[str] = None
    error: Optional[str] = field(default=None, repr=False)

    def to_json(self) -> str:
        d = {"gt": self.gt, "masked": self.masked, "mask": self.mask,
             "template_id": self.template_id, "status": self.status, "source": self.source}
        if self.error:
            d["error"] = self.error
        return json.dumps(d, sort_keys=True)


# (cropped face image, source file name) -> landmarks, or None when not found
LandmarkProvider = Callable[[np.ndarray, str], Optional[FaceLandmarks]]

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def build_dataset(faces_dir, templates_dir, out_dir, seed: int,
                  landmark_provider: LandmarkProvider, image_size: int = 256,
                  manifest_name: str = "manifest.jsonl") -> List[DatasetRecord]:
    """Synthesize (masked, mask, ground truth) PNG triples for every face image.

    ``landmark_provider`` receives the cropped/resized face and its file name
    and returns landmarks or ``None`` (recorded as ``not_found`` and skipped). Unreadable
    faces are recorded with status ``error``. The manifest is written as JSON
    lines next to the images; paths in it are relative to ``out_dir``.
    """
    faces_dir, out_dir = Path(faces_dir), Path(out_dir)
    templates = load_templates(templates_dir)
    ids = tuple(sorted(templates))
    try:
        for sub in ("gt", "masked", "mask"):
            (out_dir / sub).mkdir(parents=True, exist_ok=True)
        manifest = open(out_dir / manifest_name, "w", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write to output directory {out_dir}: {exc}") from exc

    faces = sorted(p for p in faces_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    records = []
    with manifest:
        for index, path in enumerate(faces):
            tid = choose_template(seed, index, ids)
            record = _synthesize_one(path, templates[tid], out_dir, image_size, landmark_provider)
            records.append(record)
            manifest.write(record.to_json() + "\n")
    n_ok = sum(r.status == "found" for r in records)
    log.info("synthesized %d/%d faces into %s", n_ok, len(records), out_dir)
    return records


def _synthesize_one(path: Path, tpl: MaskTemplate, out_dir: Path, image_size: int,
                    provider: LandmarkProvider) -> DatasetRecord:
    try:
        face = resize_image(load_image(path, 3), image_size)
    except ImageIOError as exc:
        log.warning("skipping unreadable face %s: %s", path, exc)
        return DatasetRecord(path.name, tpl.id, "error", error=str(exc))
    lm = provider(face, path.name)
    if lm is None:
        return DatasetRecord(path.name, tpl.id, "not_found")
    try:
        lm.check_bounds(image_size, image_size)
        masked, mask = overlay_mask(face, tpl, fit_mask_transform(lm, tpl))
    except ValueError as exc:
        log.warning("cannot place mask on %s: %s", path, exc)
        return DatasetRecord(path.name, tpl.id, "error", error=str(exc))
    name = path.stem + ".png"
    rel = {sub: f"{sub}/{name}" for sub in ("gt", "masked", "mask")}
    save_image(out_dir / rel["gt"], face)
    save_image(out_dir / rel["masked"], masked)
    save_mask(out_dir / rel["mask"], mask)
    return DatasetRecord(path.name, tpl.id, "found", **rel)


def read_manifest(path: Union[str, os.PathLike], only_found: bool = True) -> List[dict]:
    """Parse a manifest; relative paths are resolved against the manifest's directory."""
    path = Path(path)
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        if only_found and row.get("status") != "found":
            continue
        for key in ("gt", "masked", "mask"):
            if row.get(key):
                row[key] = str((path.parent / row[key]).resolve())
        rows.append(row)
    return rows


def json_landmark_provider(landmarks_file: Union[str, os.PathLike]) -> LandmarkProvider:
    """Provider backed by a JSON object ``{file name: landmarks dict or null}``.

    Coordinates are in the cropped/resized frame that :func:`build_dataset`
    hands to the provider.
    """
    table = json.loads(Path(landmarks_file).read_text(encoding="utf-8"))

    def provider(face: np.ndarray, name: str) -> Optional[FaceLandmarks]:
        entry = table.get(name)
        return None if entry is None else FaceLandmarks.from_dict(entry)

    return provider
