"""One-shot example-based retouching with patch-space transformation blending."""

__version__ = "0.1.0"

from .blend import BandMap, RegressorMap, RetouchModel, WeightField, apply_model, field_weights, map_patch
from .image_io import ImageBuf, load_image, rgb_to_ycbcr, save_image, ycbcr_to_rgb
from .modelio import load_model, save_model
from .pyramid import LaplacianPyramid, decompose, gaussian_blur, reconstruct
from .training import TrainConfig, train
