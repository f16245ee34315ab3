"""Scikit-learn style estimators wrapping the segmentation and inpainting trainers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint
from .config import TrainConfig
from .segmentation import binarize, iou
from .training import (InpaintingTrainer, SegmentationTrainer, inpaint_arrays,
                       segment_arrays)
from .validation import check_images, check_masks


class MaskSegmenter(BaseEstimator):
    """Predict binary face-mask maps from masked portraits.

    Parameters
    ----------
    image_size : int
        Square input size; must be divisible by ``2 ** depth``.
    base_width, depth : int
        Width of the stem and number of encoder/decoder blocks.
    n_steps : int
        Optimizer steps taken by :meth:`fit`.
    batch_size : int
    learning_rate : float
    threshold : float
        Probability at or above which a pixel is called masked.
    random_state : int
    """

    def __init__(self, image_size=64, base_width=8, depth=4, n_steps=500, batch_size=4,
                 learning_rate=2e-4, threshold=0.5, random_state=0):
        self.image_size = image_size
        self.base_width = base_width
        self.depth = depth
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.threshold = threshold
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            seed=self.random_state, image_size=self.image_size, batch_size=self.batch_size,
            seg_base_width=self.base_width, seg_depth=self.depth, base_lr=self.learning_rate,
            mask_threshold=self.threshold, epochs=1, steps_per_epoch=max(self.n_steps, 1),
            max_steps=self.n_steps,
        )

    def fit(self, X, y):
        """Fit on images ``X`` (n, H, W, 3) in [0, 1] and binary masks ``y`` (n, H, W)."""
        X = check_images(X, self.image_size)
        y = check_masks(y, X, "y")
        self.trainer_ = SegmentationTrainer(self._config()).fit(X, y)
        self.history_ = self.trainer_.history
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "trainer_")
        return segment_arrays(self.trainer_.model, check_images(X, self.image_size))

    def predict(self, X):
        return binarize(self.predict_proba(X), self.threshold)

    def score(self, X, y):
        """Mean IoU between predicted and reference masks."""
        pred = self.predict(X)
        y = check_masks(y, check_images(X, self.image_size), "y")
        return float(np.mean([iou(p, t) for p, t in zip(pred, y)]))

    def save(self, path):
        check_is_fitted(self, "trainer_")
        return self.trainer_.save(path)

    @classmethod
    def load(cls, path) -> "MaskSegmenter":
        trainer = SegmentationTrainer.from_checkpoint(load_checkpoint(path))
        cfg = trainer.cfg
        est = cls(image_size=cfg.image_size, base_width=cfg.seg_base_width, depth=cfg.seg_depth,
                  n_steps=cfg.max_steps or 0, batch_size=cfg.batch_size,
                  learning_rate=cfg.base_lr, threshold=cfg.mask_threshold, random_state=cfg.seed)
        est.trainer_ = trainer
        est.history_ = trainer.history
        return est


class FaceInpainter(TransformerMixin, BaseEstimator):
    """Reconstruct the masked region of portraits.

    ``fit(X, y, mask=...)`` trains on masked images ``X`` and ground truths
    ``y``. ``predict``/``transform`` return composites: visible pixels of
    ``X`` untouched, masked pixels from the generator. When ``mask`` is not
    given at prediction time, ``segmenter`` (a fitted :class:`MaskSegmenter`)
    supplies it.

    Parameters
    ----------
    image_size : int
        Square input size, divisible by 16.
    base_width : int
        Width of the first encoder layer; the bottleneck is ``8 * base_width``.
    attention_mode : {"mcsam", "csam_only", "none"}
    supervision_mode : {"local", "full"}
    n_steps, batch_size, learning_rate : training budget and optimizer rate.
    loss_weights : tuple of 4 floats or None
        Reconstruction, perceptual, style, adversarial weights.
    backbone : {"surrogate", "vgg16"}
    segmenter : MaskSegmenter or None
    random_state : int
    """

    def __init__(self, image_size=64, base_width=16, attention_mode="mcsam",
                 supervision_mode="local", n_steps=2000, batch_size=4, learning_rate=2e-4,
                 loss_weights=None, backbone="surrogate", segmenter=None, random_state=0):
        self.image_size = image_size
        self.base_width = base_width
        self.attention_mode = attention_mode
        self.supervision_mode = supervision_mode
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.loss_weights = loss_weights
        self.backbone = backbone
        self.segmenter = segmenter
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        weights = {}
        if self.loss_weights is not None:
            weights = dict(zip(("lambda_r", "lambda_p", "lambda_s", "lambda_adv"), self.loss_weights))
        return TrainConfig(
            seed=self.random_state, image_size=self.image_size, batch_size=self.batch_size,
            gen_base_width=self.base_width, attention_mode=self.attention_mode,
            supervision_mode=self.supervision_mode, base_lr=self.learning_rate,
            backbone=self.backbone, epochs=1, steps_per_epoch=max(self.n_steps, 1),
            max_steps=self.n_steps, **weights,
        )

    def fit(self, X, y, mask=None):
        X = check_images(X, self.image_size)
        y = check_images(y, self.image_size, "y")
        if y.shape != X.shape:
            raise ValueError(f"y shape {y.shape} does not match X {X.shape}")
        mask = self._masks(X, mask)
        self.trainer_ = InpaintingTrainer(self._config()).fit(X, mask, y)
        self.history_ = self.trainer_.history
        return self

    def _masks(self, X, mask):
        if mask is None:
            if self.segmenter is None:
                raise ValueError("no mask given and no segmenter configured")
            return self.segmenter.predict(X)
        return check_masks(mask, X)

    def predict(self, X, mask=None):
        check_is_fitted(self, "trainer_")
        X = check_images(X, self.image_size)
        syn, _ = inpaint_arrays(self.trainer_.generator, X, self._masks(X, mask))
        return syn

    def transform(self, X, mask=None):
        return self.predict(X, mask)

    def predict_raw(self, X, mask=None):
        """Generator output before compositing."""
        check_is_fitted(self, "trainer_")
        X = check_images(X, self.image_size)
        return inpaint_arrays(self.trainer_.generator, X, self._masks(X, mask))[1]

    def score(self, X, y, mask=None):
        """Mean SSIM of the composites against ``y``."""
        from .metrics import ssim

        syn = self.predict(X, mask)
        y = check_images(y, self.image_size, "y")
        return float(np.mean([ssim(s, t) for s, t in zip(syn, y)]))

    def save(self, path):
        check_is_fitted(self, "trainer_")
        return self.trainer_.save(path)
