"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np


def check_images(X, image_size=None, name="X") -> np.ndarray:
    """Validate a batch of ``[0, 1]`` RGB images.

    Accepts ``(H, W, 3)`` or ``(n_samples, H, W, 3)`` array-likes and returns
    a float64 array of the latter shape.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[-1] != 3:
        raise ValueError(f"{name} must have shape (n_samples, H, W, 3), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if X.shape[1] != X.shape[2]:
        raise ValueError(f"{name} images must be square, got {X.shape[1]}x{X.shape[2]}")
    if image_size is not None and X.shape[1] != image_size:
        raise ValueError(f"{name} images must be {image_size}x{image_size}, got {X.shape[1]}x{X.shape[2]}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite values")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return X


def check_masks(masks, reference: np.ndarray, name="mask") -> np.ndarray:
    """Validate binary masks aligned with the image batch ``reference``."""
    masks = np.asarray(masks, dtype=np.float64)
    if masks.ndim == 2:
        masks = masks[None]
    if masks.ndim == 4 and masks.shape[-1] == 1:
        masks = masks[..., 0]
    if masks.shape != reference.shape[:3]:
        raise ValueError(f"{name} shape {masks.shape} does not match images {reference.shape[:3]}")
    if not np.all((masks == 0) | (masks == 1)):
        raise ValueError(f"{name} values must be exactly 0 or 1")
    return masks
