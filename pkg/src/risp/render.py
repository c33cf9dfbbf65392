"""Simple forward-ISP post-processing of bayer images for viewing."""

from __future__ import annotations

import os
from typing import Union

import numpy as np

from .bayer import demosaic
from .data_synth import IspParams, forward_isp


def render_visualization(bayer, p: IspParams, demosaicer: str = "malvar") -> np.ndarray:
    """Packed bayer ``(4, H, W)`` -> 8-bit sRGB ``(2H, 2W, 3)``.

    Demosaic, white balance, color matrix, display gamma and clamp, using the
    same steps as the synthetic camera so the round trip is consistent.
    """
    rgb = forward_isp(demosaic(bayer, demosaicer), p).astype(np.float64)
    return np.round(np.moveaxis(rgb, -3, -1) * 255.0).astype(np.uint8)


def save_png(image: np.ndarray, path: Union[str, os.PathLike]) -> None:
    from PIL import Image

    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[-1] != 3:
        raise ValueError(f"save_png expects an (H, W, 3) uint8 array, got {img.dtype} {img.shape}")
    Image.fromarray(img, "RGB").save(os.fspath(path), format="PNG")
