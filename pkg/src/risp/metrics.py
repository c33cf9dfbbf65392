"""Fidelity metrics on packed bayer images (float64 throughout)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .losses import ssim as _ssim_tensor
from .tensor import Tensor, no_grad

PSNR_CAP = 99.0


def _f64(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def psnr(a, b, max_value: float = 1.0) -> float:
    """``10 log10(max^2 / MSE)``; identical inputs report ``PSNR_CAP``."""
    a, b = _f64(a), _f64(b)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    return psnr_from_mse(float(np.mean((a - b) ** 2)), max_value)


def psnr_from_mse(mse: float, max_value: float = 1.0) -> float:
    if mse < 1e-12:
        return PSNR_CAP
    return 10.0 * math.log10(max_value**2 / mse)


def ssim(a, b, sigma: float = 1.5, kernel: int = 11) -> float:
    """Per-channel SSIM averaged over channels (Gaussian window, reflect borders)."""
    a, b = _f64(a), _f64(b)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    with no_grad():
        return float(_ssim_tensor(Tensor(a, dtype=np.float64), Tensor(b, dtype=np.float64),
                                  sigma=sigma, kernel=kernel).data)


def bayer_site_mask(mask) -> np.ndarray:
    """RGB-resolution mask -> bayer sites: a site is overexposed if any of its 2x2 pixels is."""
    m = np.asarray(getattr(mask, "data", mask))
    if m.ndim >= 3 and m.shape[-3] == 1:
        m = m[..., 0, :, :]
    h, w = m.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"mask dims must be even, got {h}x{w}")
    return m.reshape(m.shape[:-2] + (h // 2, 2, w // 2, 2)).max(axis=(-3, -1)) > 0


@dataclass
class EvalReport:
    psnr: List[float] = field(default_factory=list)
    ssim: List[float] = field(default_factory=list)
    psnr_oe: List[Optional[float]] = field(default_factory=list)
    psnr_noe: List[Optional[float]] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr)) if self.psnr else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else float("nan")

    @staticmethod
    def _mean_present(values) -> Optional[float]:
        vals = [v for v in values if v is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def mean_psnr_oe(self) -> Optional[float]:
        return self._mean_present(self.psnr_oe)

    @property
    def mean_psnr_noe(self) -> Optional[float]:
        return self._mean_present(self.psnr_noe)

    def extend(self, other: "EvalReport") -> None:
        self.psnr += other.psnr
        self.ssim += other.ssim
        self.psnr_oe += other.psnr_oe
        self.psnr_noe += other.psnr_noe

    def summary(self) -> str:
        line = f"psnr_db={self.mean_psnr:.4f} ssim={self.mean_ssim:.6f}"
        if self.mean_psnr_oe is not None:
            line += f" psnr_oe_db={self.mean_psnr_oe:.4f}"
        if self.mean_psnr_noe is not None:
            line += f" psnr_noe_db={self.mean_psnr_noe:.4f}"
        return line


def region_mse(pred, gt, sites: np.ndarray) -> tuple[Optional[float], int]:
    """MSE over the bayer sites selected by ``sites`` (all planes); ``None`` when empty."""
    d = (_f64(pred) - _f64(gt)) ** 2
    count = int(sites.sum())
    if count == 0:
        return None, 0
    return float(d[..., sites].mean()), count


def evaluate(pred_bayer, gt_bayer, mask=None) -> EvalReport:
    """Evaluate one ``(4, H, W)`` bayer image or a batch ``(N, 4, H, W)``."""
    pred, gt = _f64(pred_bayer), _f64(gt_bayer)
    if pred.shape != gt.shape:
        raise ValueError(f"evaluate: shape mismatch {pred.shape} vs {gt.shape}")
    if pred.ndim == 3:
        pred, gt = pred[None], gt[None]
        if mask is not None:
            mask = np.asarray(getattr(mask, "data", mask))[None]
    report = EvalReport()
    for i in range(len(pred)):
        report.psnr.append(psnr(pred[i], gt[i]))
        report.ssim.append(ssim(pred[i], gt[i]))
        if mask is None:
            continue
        sites = bayer_site_mask(np.asarray(mask)[i])
        if sites.shape != pred.shape[-2:]:
            raise ValueError(f"evaluate: mask gives {sites.shape} sites for bayer {pred.shape[-2:]}")
        mse_oe, _ = region_mse(pred[i], gt[i], sites)
        mse_noe, _ = region_mse(pred[i], gt[i], ~sites)
        report.psnr_oe.append(None if mse_oe is None else psnr_from_mse(mse_oe))
        report.psnr_noe.append(None if mse_noe is None else psnr_from_mse(mse_noe))
    return report


def evaluate_many(preds: Sequence, gts: Sequence, masks: Optional[Sequence] = None) -> EvalReport:
    report = EvalReport()
    for i, (p, g) in enumerate(zip(preds, gts)):
        report.extend(evaluate(p, g, None if masks is None else masks[i]))
    return report
