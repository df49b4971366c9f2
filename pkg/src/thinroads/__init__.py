"""Narrow-road extraction from high-resolution rasters.

A three-stage segmentation network (feature extraction, axis-aware
positioning, reverse-aware refinement) with deep supervision, plus the
surrounding pipeline: dataset handling, synthetic data generation, training,
metric evaluation, and tiled large-raster inference.
"""

__version__ = "0.1.0"

from .config import TrainConfig, resolve_config
from .data import RasterSample, load_manifest, load_sample
from .encoder import EncoderSpec, FeaturePyramid, ResidualEncoder
from .losses import deep_supervised_loss
from .metrics import ConfusionCounts, accumulate, roc_auc, scores
from .model import NarrowRoadNet
from .refine import SideOutputs
from .synth import SynthConfig, generate_sample, generate_split
from .tiling import plan_windows, predict_mosaic, evaluate_mosaic
from .train import fit, lr_at

__all__ = [
    "ConfusionCounts", "EncoderSpec", "FeaturePyramid", "NarrowRoadNet",
    "RasterSample", "ResidualEncoder", "SideOutputs", "SynthConfig",
    "TrainConfig", "accumulate", "deep_supervised_loss", "evaluate_mosaic",
    "fit", "generate_sample", "generate_split", "load_manifest", "load_sample",
    "lr_at", "plan_windows", "predict_mosaic", "resolve_config", "roc_auc",
    "scores", "__version__",
]
