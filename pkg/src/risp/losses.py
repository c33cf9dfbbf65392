"""Training objectives.

Every loss takes ``(pred, gt)`` tensors of identical shape, channel-first,
and returns a scalar :class:`~risp.tensor.Tensor`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import tensor as T
from .color import gamma_correct
from .functional import avg_pool_2x2, gaussian_blur
from .tensor import ArrayLike, Tensor, as_tensor

LossFn = Callable[[Tensor, Tensor], Tensor]

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _same_shape(a: ArrayLike, b: ArrayLike, name: str) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) or not isinstance(b, Tensor):
        a = as_tensor(a)
        b = as_tensor(b, dtype=a.dtype)
    else:
        a = as_tensor(a, dtype=b.dtype)
    if a.shape != b.shape:
        raise ValueError(f"{name}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def l1(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _same_shape(a, b, "l1")
    return T.absolute(a - b).mean()


def l2(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _same_shape(a, b, "l2")
    d = a - b
    return (d * d).mean()


def _ssim_terms(a: Tensor, b: Tensor, c1: float, c2: float, sigma: float, kernel: int):
    """Per-pixel luminance and contrast-structure maps."""
    blur = lambda t: gaussian_blur(t, sigma, kernel)  # noqa: E731
    mu_a, mu_b = blur(a), blur(b)
    mu_aa, mu_bb, mu_ab = mu_a * mu_a, mu_b * mu_b, mu_a * mu_b
    var_a = blur(a * a) - mu_aa
    var_b = blur(b * b) - mu_bb
    cov = blur(a * b) - mu_ab
    lum = (2.0 * mu_ab + c1) / (mu_aa + mu_bb + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return lum, cs


def ssim(a: ArrayLike, b: ArrayLike, c1: float = SSIM_C1, c2: float = SSIM_C2,
         sigma: float = 1.5, kernel: int = 11) -> Tensor:
    """Mean SSIM over all pixels and channels with Gaussian windows."""
    a, b = _same_shape(a, b, "ssim")
    if min(a.shape[-2:]) <= kernel // 2:
        raise ValueError(f"ssim: image {a.shape[-2:]} too small for kernel {kernel}")
    lum, cs = _ssim_terms(a, b, c1, c2, sigma, kernel)
    return (lum * cs).mean()


@dataclass
class MsSsimL1Config:
    alpha: float = 0.84
    scale_count: int = 3
    scale_weights: Sequence[float] = field(default_factory=lambda: truncated_weights(3))
    gaussian_sigma: float = 1.5
    kernel_size: int = 11

    def __post_init__(self):
        if self.scale_count < 1:
            raise ValueError("scale_count must be >= 1")
        if len(self.scale_weights) != self.scale_count:
            raise ValueError(f"{len(self.scale_weights)} scale weights for {self.scale_count} scales")
        if abs(sum(self.scale_weights) - 1.0) > 1e-6:
            raise ValueError(f"scale weights must sum to 1, got {sum(self.scale_weights)}")
        if self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")

    @property
    def min_size(self) -> int:
        return self.kernel_size * 2 ** (self.scale_count - 1)

    @classmethod
    def small(cls, scale_count: int, kernel_size: int, sigma: float = 1.5, alpha: float = 0.84):
        return cls(alpha, scale_count, truncated_weights(scale_count), sigma, kernel_size)


def truncated_weights(scale_count: int) -> tuple:
    """First ``scale_count`` standard MS-SSIM exponents, renormalized to sum 1."""
    if not 1 <= scale_count <= len(MS_SSIM_WEIGHTS):
        raise ValueError(f"scale_count must be in 1..{len(MS_SSIM_WEIGHTS)}")
    w = np.asarray(MS_SSIM_WEIGHTS[:scale_count])
    return tuple(float(v) for v in w / w.sum())


def ms_ssim(a: ArrayLike, b: ArrayLike, cfg: Optional[MsSsimL1Config] = None) -> Tensor:
    """Multi-scale SSIM with 2x average-pool downsampling between scales.

    Per-scale means are mapped to ``(v + 1) / 2`` before exponentiation so
    fractional powers of negative contrast terms never occur.
    """
    cfg = cfg or MsSsimL1Config()
    a, b = _same_shape(a, b, "ms_ssim")
    h, w = a.shape[-2:]
    if min(h, w) < cfg.min_size:
        raise ValueError(
            f"ms_ssim: image {h}x{w} too small for {cfg.scale_count} scales with kernel "
            f"{cfg.kernel_size}; need at least {cfg.min_size}x{cfg.min_size}")
    result = None
    for j, weight in enumerate(cfg.scale_weights):
        lum, cs = _ssim_terms(a, b, SSIM_C1, SSIM_C2, cfg.gaussian_sigma, cfg.kernel_size)
        last = j == cfg.scale_count - 1
        term = (lum * cs).mean() if last else cs.mean()
        factor = T.power((term + 1.0) * 0.5, weight)
        result = factor if result is None else result * factor
        if not last:
            a, b = avg_pool_2x2(_even(a)), avg_pool_2x2(_even(b))
    return result


def _even(x: Tensor) -> Tensor:
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        return x[..., : h - h % 2, : w - w % 2]
    return x


def ms_ssim_l1(a: ArrayLike, b: ArrayLike, cfg: Optional[MsSsimL1Config] = None) -> Tensor:
    """``alpha * (1 - MS-SSIM) + (1 - alpha) * mean(G * |a - b|)``."""
    cfg = cfg or MsSsimL1Config()
    a, b = _same_shape(a, b, "ms_ssim_l1")
    structural = 1.0 - ms_ssim(a, b, cfg)
    weighted_l1 = gaussian_blur(T.absolute(a - b), cfg.gaussian_sigma, cfg.kernel_size).mean()
    return cfg.alpha * structural + (1.0 - cfg.alpha) * weighted_l1


class Keep(Enum):
    OVEREXPOSED = "oe"
    NON_OVEREXPOSED = "noe"


def masked_loss(base: LossFn, pred: ArrayLike, gt: ArrayLike, mask, keep: Keep) -> Tensor:
    """Zero the complement of the kept region in both images, then apply ``base``."""
    pred, gt = _same_shape(pred, gt, "masked_loss")
    m = np.asarray(getattr(mask, "data", mask), dtype=pred.dtype)
    if m.ndim == pred.ndim - 1:
        m = m[..., None, :, :]
    if m.shape[-2:] != pred.shape[-2:] or m.shape[-3] != 1:
        raise ValueError(f"masked_loss: mask shape {m.shape} does not match image shape {pred.shape}")
    weight = m if keep is Keep.OVEREXPOSED else 1.0 - m
    return base(pred * weight, gt * weight)


# -- composite objectives --------------------------------------------------------
_lpips_backend: Optional[LossFn] = None


def register_lpips_backend(fn: Optional[LossFn]) -> None:
    """Install (or with ``None`` remove) the perceptual-feature distance term."""
    global _lpips_backend
    _lpips_backend = fn


def lpips_backend() -> Optional[LossFn]:
    return _lpips_backend


@dataclass
class LossWeights:
    w_lpips: float = 1.0
    w_l2: float = 0.05
    w_msssim_l1: float = 0.75

    def __post_init__(self):
        if min(self.w_lpips, self.w_l2, self.w_msssim_l1) < 0:
            raise ValueError(f"loss weights must be non-negative: {self}")


def noe_composite(pred: ArrayLike, gt: ArrayLike, weights: Optional[LossWeights] = None,
                  cfg: Optional[MsSsimL1Config] = None) -> Tensor:
    """``w_lpips * LPIPS + w_l2 * L2 + w_msssim_l1 * MS-SSIM-L1``.

    The LPIPS term is skipped unless a backend has been registered.
    """
    weights = weights or LossWeights()
    pred, gt = _same_shape(pred, gt, "noe_composite")
    total = None
    backend = _lpips_backend
    if backend is not None and weights.w_lpips:
        total = weights.w_lpips * backend(pred, gt)
    if weights.w_l2:
        term = weights.w_l2 * l2(pred, gt)
        total = term if total is None else total + term
    if weights.w_msssim_l1:
        term = weights.w_msssim_l1 * ms_ssim_l1(pred, gt, cfg)
        total = term if total is None else total + term
    if total is None:
        total = (pred - gt).sum() * 0.0
    return total


def gamma_wrapped(base: LossFn, pred: ArrayLike, gt: ArrayLike, gamma: float) -> Tensor:
    """Apply ``x ** gamma`` to both arguments before ``base``."""
    pred, gt = _same_shape(pred, gt, "gamma_wrapped")
    return base(gamma_correct(pred, gamma), gamma_correct(gt, gamma))
