"""Reverse ISP: reconstruct packed RAW bayer images from sRGB with an
overexposure-mask-guided pair of U-Nets."""

from .bayer import demosaic, mosaic
from .color import MaskMode, gamma_correct, overexposure_mask, rgb_to_yuv, yuv_to_rgb
from .model import BranchKind, UNet, UNetConfig, load_weights, save_weights
from .pipeline import TrainConfig, fuse, infer, train_branch, yuv_refine
from .tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = [
    "BranchKind", "MaskMode", "Tensor", "TrainConfig", "UNet", "UNetConfig", "demosaic", "fuse",
    "gamma_correct", "infer", "load_weights", "mosaic", "no_grad", "overexposure_mask", "rgb_to_yuv",
    "save_weights", "train_branch", "yuv_refine", "yuv_to_rgb",
]
