"""Face-mask removal: mask segmentation plus region-attentive inpainting."""

from .config import PRESETS, TrainConfig, load_config
from .estimators import FaceInpainter, MaskSegmenter
from .generator import GeneratorConfig, InpaintingGenerator
from .imaging import composite
from .metrics import l1_metric, psnr, ssim
from .segmentation import MaskSegNet, SegNetConfig
from .training import InpaintingTrainer, SegmentationTrainer

__version__ = "0.1.0"

__all__ = [
    "PRESETS", "TrainConfig", "load_config", "FaceInpainter", "MaskSegmenter",
    "GeneratorConfig", "InpaintingGenerator", "composite", "l1_metric", "psnr", "ssim",
    "MaskSegNet", "SegNetConfig", "InpaintingTrainer", "SegmentationTrainer",
]
