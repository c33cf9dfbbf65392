"""Color transforms, gamma correction and overexposure masks.

Images are channel-first: ``(3, H, W)`` or batched ``(N, 3, H, W)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .tensor import ArrayLike, Tensor, as_tensor, is_checked, make_node, mix_channels

# Rows exactly as printed: Y, U, V.
RGB_TO_YUV = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.14713, -0.28886, 0.436],
        [0.615, -0.51499, -0.10001],
    ],
    dtype=np.float64,
)
YUV_TO_RGB = np.linalg.inv(RGB_TO_YUV)
assert np.abs(RGB_TO_YUV @ YUV_TO_RGB - np.eye(3)).max() < 1e-10
RGB_TO_YUV.setflags(write=False)
YUV_TO_RGB.setflags(write=False)

Y_THRESHOLD = 0.978
MAXRGB_THRESHOLD = 0.99
GAMMA_NEG_SLOPE = 1.0
GAMMA_GRAD_CAP = 1e4


def _check_rgb(x: Tensor, name: str) -> None:
    if x.ndim < 3 or x.shape[-3] != 3:
        raise ValueError(f"{name}: expected 3 channels on axis -3, got shape {x.shape}")


def rgb_to_yuv(image: ArrayLike) -> Tensor:
    x = as_tensor(image)
    _check_rgb(x, "rgb_to_yuv")
    return mix_channels(x, RGB_TO_YUV)


def yuv_to_rgb(image: ArrayLike) -> Tensor:
    x = as_tensor(image)
    _check_rgb(x, "yuv_to_rgb")
    return mix_channels(x, YUV_TO_RGB)


def luminance(image) -> np.ndarray:
    """Y channel in float64, shape ``image.shape`` without the channel axis."""
    a = np.asarray(getattr(image, "data", image), dtype=np.float64)
    if a.ndim < 3 or a.shape[-3] != 3:
        raise ValueError(f"luminance: expected 3 channels on axis -3, got shape {a.shape}")
    w = RGB_TO_YUV[0]
    return w[0] * a[..., 0, :, :] + w[1] * a[..., 1, :, :] + w[2] * a[..., 2, :, :]


class MaskKind(Enum):
    LUMINANCE_Y = "y"
    MAX_RGB = "maxrgb"


@dataclass(frozen=True)
class MaskMode:
    kind: MaskKind = MaskKind.LUMINANCE_Y
    threshold: float = Y_THRESHOLD

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"mask threshold must lie in (0, 1], got {self.threshold}")

    @classmethod
    def luminance_y(cls, threshold: float = Y_THRESHOLD) -> "MaskMode":
        return cls(MaskKind.LUMINANCE_Y, threshold)

    @classmethod
    def max_rgb(cls, threshold: float = MAXRGB_THRESHOLD) -> "MaskMode":
        return cls(MaskKind.MAX_RGB, threshold)

    @classmethod
    def parse(cls, name: str) -> "MaskMode":
        name = name.lower()
        if name in ("y", "luminance", "luminance_y"):
            return cls.luminance_y()
        if name in ("maxrgb", "max_rgb"):
            return cls.max_rgb()
        raise ValueError(f"unknown mask mode {name!r} (expected 'y' or 'maxrgb')")


def overexposure_mask(image, mode: MaskMode = MaskMode()) -> np.ndarray:
    """Binary float32 mask with one channel: ``(1, H, W)`` or ``(N, 1, H, W)``.

    Comparisons are inclusive and evaluated in float64 on the sRGB input.
    """
    a = np.asarray(getattr(image, "data", image))
    if mode.kind is MaskKind.LUMINANCE_Y:
        score = luminance(a)
    else:
        if a.ndim < 3 or a.shape[-3] != 3:
            raise ValueError(f"overexposure_mask: expected 3 channels on axis -3, got shape {a.shape}")
        score = a.astype(np.float64).max(axis=-3)
    mask = (score >= mode.threshold).astype(np.float32)
    return mask[..., None, :, :]


def gamma_correct(image: ArrayLike, gamma: float) -> Tensor:
    """Elementwise ``x ** gamma`` with a capped derivative.

    Negative inputs raise in checked mode; otherwise they are treated as 0
    and pass gradient with slope ``GAMMA_NEG_SLOPE`` so they can recover.
    """
    x = as_tensor(image)
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    if gamma == 1.0:
        return x
    if is_checked() and np.any(x.data < 0):
        raise ValueError("gamma_correct: negative input values")
    base = np.maximum(x.data, 0)
    out = base**gamma

    def backward(g):
        with np.errstate(divide="ignore"):
            slope = gamma * base ** (gamma - 1.0)
            slope = np.where(x.data < 0, GAMMA_NEG_SLOPE, np.minimum(slope, GAMMA_GRAD_CAP))
        return (g * slope.astype(x.dtype, copy=False),)

    return make_node(out, (x,), backward, "gamma_correct")
