"""Interpretable image enhancement via learned, named color filters.

An MLP-defined residual color transform exposes a handful of named
strength sliders (Exposure, Contrast, ...). Training aligns each slider
with its visual impression through a Jacobian constraint on analytic
impression scores; inference distills the MLP into a 3D LUT so
application cost is independent of image size.
"""

from .image import ImageBuf
from .transform import (DEFAULT_FILTER_NAMES, FilterParams, MlpFilter,
                        apply_direct, count_params, transform_pixel)
from .lut import Lut3d, bypass, lookup, parse_cube, write_cube
from .scores import ImpressionScores, PromptPair, clip_ratio, score_analytic
from .predictor import ParamPredictor, downscale, predict
from .train import TrainConfig, psnr, stage1, stage2, stage3
from .losses import PgConfig
from .checkpoint import load_checkpoint, save_checkpoint
from .dataio import DatasetPair, GenSpec, generate_dataset, generate_pair, read_image, write_image

__version__ = "0.1.0"

__all__ = [
    "ImageBuf",
    "DEFAULT_FILTER_NAMES",
    "FilterParams",
    "MlpFilter",
    "apply_direct",
    "count_params",
    "transform_pixel",
    "Lut3d",
    "bypass",
    "lookup",
    "parse_cube",
    "write_cube",
    "ImpressionScores",
    "PromptPair",
    "clip_ratio",
    "score_analytic",
    "ParamPredictor",
    "downscale",
    "predict",
    "TrainConfig",
    "PgConfig",
    "psnr",
    "stage1",
    "stage2",
    "stage3",
    "load_checkpoint",
    "save_checkpoint",
    "DatasetPair",
    "GenSpec",
    "generate_dataset",
    "generate_pair",
    "read_image",
    "write_image",
    "__version__",
]
