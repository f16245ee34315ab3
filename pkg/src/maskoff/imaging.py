"""Image and mask representations, pixel-range conversions, PNG/JPEG I/O and
region-attentive compositing.

Conventions used across the package:

* images on disk and in metric code are float arrays in ``[0, 1]`` laid out
  ``H x W x C``;
* images inside the networks are ``N x C x H x W`` tensors in ``[-1, 1]``;
* masks use ``1`` for occluded (masked) pixels and ``0`` for visible ones.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Union

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

ArrayLike = Union[np.ndarray, torch.Tensor]

RANGE_TOL = 1e-6


class ImageIOError(OSError):
    """Raised when an image cannot be read or does not have the expected layout."""


def load_image(path: Union[str, os.PathLike], expected_channels: int = 3) -> np.ndarray:
    """Decode an 8-bit image file into a float64 ``H x W x C`` array in [0, 1].

    Grayscale files are expanded to RGB when ``expected_channels == 3``; an
    alpha channel is kept only when ``expected_channels == 4``.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(f"image file not found: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode not in ("L", "RGB", "RGBA", "LA", "P", "I;16"):
                raise ImageIOError(f"unsupported image mode {mode!r} in {path}")
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
            elif mode == "LA":
                im = im.convert("RGBA")
            arr = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise ImageIOError(f"cannot decode image: {path}") from exc
    if arr.dtype != np.uint8:
        raise ImageIOError(f"expected an 8-bit image, got {arr.dtype} in {path}")

    if arr.ndim == 2:
        arr = arr[..., None]
    channels = arr.shape[2]
    if channels != expected_channels:
        if channels == 1 and expected_channels in (3, 4):
            arr = np.repeat(arr, 3, axis=2)
            if expected_channels == 4:
                arr = np.concatenate([arr, np.full_like(arr[..., :1], 255)], axis=2)
        elif channels == 3 and expected_channels == 4:
            arr = np.concatenate([arr, np.full_like(arr[..., :1], 255)], axis=2)
        elif channels == 4 and expected_channels == 3:
            arr = arr[..., :3]
        elif expected_channels == 1 and channels in (3, 4) and _is_gray(arr[..., :3]):
            arr = arr[..., :1]
        else:
            raise ImageIOError(
                f"{path} has {channels} channels, expected {expected_channels}"
            )
    return arr.astype(np.float64) / 255.0


def _is_gray(rgb: np.ndarray) -> bool:
    return bool(np.all(rgb[..., 0] == rgb[..., 1]) and np.all(rgb[..., 1] == rgb[..., 2]))


def load_mask(path: Union[str, os.PathLike]) -> np.ndarray:
    """Read a mask PNG as a ``H x W`` float array with values in {0, 1}."""
    arr = load_image(path, expected_channels=1)[..., 0]
    return (arr >= 0.5).astype(np.float64)


def save_image(path: Union[str, os.PathLike], img: np.ndarray) -> None:
    """Encode a [0, 1] ``H x W [x C]`` array as an 8-bit PNG (or JPEG by suffix)."""
    img = np.asarray(img, dtype=np.float64)
    check_unit_range(img)
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[..., 0]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data).save(path)


def save_mask(path: Union[str, os.PathLike], mask: np.ndarray) -> None:
    save_image(path, check_binary_mask(mask).astype(np.float64))


def check_unit_range(img: ArrayLike, tol: float = RANGE_TOL) -> None:
    lo, hi = float(img.min()), float(img.max())
    if lo < -tol or hi > 1.0 + tol:
        raise ValueError(f"image values must lie in [0, 1], got [{lo:.4g}, {hi:.4g}]")


def check_model_range(img: ArrayLike, tol: float = RANGE_TOL) -> None:
    lo, hi = float(img.min()), float(img.max())
    if lo < -1.0 - tol or hi > 1.0 + tol:
        raise ValueError(f"image values must lie in [-1, 1], got [{lo:.4g}, {hi:.4g}]")


def check_binary_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim == 3 and mask.shape[2] == 1:
        mask = mask[..., 0]
    if mask.ndim != 2:
        raise ValueError(f"mask must be H x W, got shape {mask.shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("mask values must be exactly 0 or 1")
    return mask


def to_model_range(img: ArrayLike) -> ArrayLike:
    """Map [0, 1] pixels to the generator's [-1, 1] range."""
    check_unit_range(img)
    return img * 2.0 - 1.0


def from_model_range(img: ArrayLike) -> ArrayLike:
    """Inverse of :func:`to_model_range`."""
    check_model_range(img)
    return (img + 1.0) / 2.0


def hwc_to_tensor(img: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """``H x W x C`` (or ``N x H x W x C``) array to an ``N x C x H x W`` tensor."""
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def mask_to_tensor(mask: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """``H x W`` (or ``N x H x W``) mask to an ``N x 1 x H x W`` tensor."""
    arr = np.asarray(mask)
    if arr.ndim == 2:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr[:, None])).to(dtype)


def tensor_to_hwc(t: torch.Tensor) -> np.ndarray:
    """``N x C x H x W`` tensor to a float64 ``N x H x W x C`` array."""
    return t.detach().cpu().to(torch.float64).numpy().transpose(0, 2, 3, 1)


def composite(inp: ArrayLike, mask: ArrayLike, raw_output: ArrayLike) -> ArrayLike:
    """Keep ``inp`` where ``mask == 0`` and take ``raw_output`` where ``mask == 1``.

    Works on numpy arrays (``H x W x C`` with an ``H x W`` mask) and on torch
    tensors (``N x C x H x W`` with an ``N x 1 x H x W`` mask). Selection is
    exact: no pixel is a blend of both sources, and gradients reach
    ``raw_output`` only through masked pixels.
    """
    if inp.shape != raw_output.shape:
        raise ValueError(f"shape mismatch: inp {tuple(inp.shape)} vs raw {tuple(raw_output.shape)}")
    if isinstance(inp, torch.Tensor):
        if mask.dim() == inp.dim() - 1:
            mask = mask.unsqueeze(-3)
        _check_mask_broadcast(tuple(inp.shape), tuple(mask.shape), channel_axis=-3)
        return torch.where(mask > 0.5, raw_output, inp)
    mask = np.asarray(mask)
    if mask.ndim == inp.ndim - 1:
        mask = mask[..., None]
    _check_mask_broadcast(inp.shape, mask.shape, channel_axis=-1)
    return np.where(mask > 0.5, raw_output, inp)


def _check_mask_broadcast(img_shape: tuple, mask_shape: tuple, channel_axis: int) -> None:
    if len(img_shape) != len(mask_shape):
        raise ValueError(f"mask shape {mask_shape} incompatible with image {img_shape}")
    for axis, (a, b) in enumerate(zip(img_shape, mask_shape)):
        if axis == len(img_shape) + channel_axis:
            if b not in (1, a):
                raise ValueError(f"mask shape {mask_shape} incompatible with image {img_shape}")
        elif a != b:
            raise ValueError(f"mask shape {mask_shape} incompatible with image {img_shape}")


def resize_image(img: np.ndarray, size: int, resample: int = Image.BILINEAR) -> np.ndarray:
    """Center-crop to a square and resize to ``size x size``."""
    h, w = img.shape[:2]
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    img = img[top : top + side, left : left + side]
    if side == size:
        return img.copy()
    data = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    squeeze = data.ndim == 3 and data.shape[2] == 1
    if squeeze:
        data = data[..., 0]
    out = np.asarray(Image.fromarray(data).resize((size, size), resample=resample))
    if squeeze:
        out = out[..., None]
    return out.astype(np.float64) / 255.0


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    """Center-crop and bilinearly resize a binary mask, re-binarized at 0.5."""
    soft = resize_image(np.asarray(mask, dtype=np.float64)[..., None], size)[..., 0]
    return (soft >= 0.5).astype(np.float64)
