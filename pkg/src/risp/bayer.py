"""RGGB packing, classical demosaicing and bayer-to-YUV mapping.

A packed bayer image is ``(4, H, W)`` (or ``(N, 4, H, W)``) with planes
R, G1, G2, B taken from each 2x2 block of the full-resolution image:
R at (0, 0), G1 at (0, 1), G2 at (1, 0), B at (1, 1).
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate

from .color import RGB_TO_YUV
from .tensor import ArrayLike, Tensor, as_tensor, concat, mix_channels

# (row, col) offset of each plane inside its 2x2 block, and the RGB channel it samples.
PLANE_SITES = ((0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 2))


def mosaic(raw: ArrayLike) -> Tensor:
    """Differentiable 2Hx2Wx3 -> HxWx4 sampling (channel-first layout)."""
    x = as_tensor(raw)
    if x.ndim < 3 or x.shape[-3] != 3:
        raise ValueError(f"mosaic: expected 3 channels on axis -3, got shape {x.shape}")
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"mosaic: spatial dims must be even, got {h}x{w}")
    planes = [x[..., c:c + 1, dy::2, dx::2] for dy, dx, c in PLANE_SITES]
    return concat(planes, axis=x.ndim - 3)


def _check_bayer(a: np.ndarray, name: str) -> None:
    if a.ndim < 3 or a.shape[-3] != 4:
        raise ValueError(f"{name}: expected 4 bayer planes on axis -3, got shape {a.shape}")


def to_cfa(bayer) -> np.ndarray:
    """Unpack planes into a single-channel CFA image ``(..., 2H, 2W)`` (float64)."""
    a = np.asarray(getattr(bayer, "data", bayer), dtype=np.float64)
    _check_bayer(a, "to_cfa")
    h, w = a.shape[-2:]
    cfa = np.empty(a.shape[:-3] + (2 * h, 2 * w))
    for p, (dy, dx, _) in enumerate(PLANE_SITES):
        cfa[..., dy::2, dx::2] = a[..., p, :, :]
    return cfa


def _site_masks(h2: int, w2: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = np.arange(h2)[:, None] % 2
    cols = np.arange(w2)[None, :] % 2
    r = (rows == 0) & (cols == 0)
    b = (rows == 1) & (cols == 1)
    return r, ~(r | b), b


def _filter(cfa: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Reflect ("mirror" in scipy terms) keeps the CFA phase at the borders.
    k = np.asarray(kernel, dtype=np.float64)
    full = np.zeros((1,) * (cfa.ndim - 2) + k.shape)
    full[..., :, :] = k
    return correlate(cfa, full, mode="mirror")


_BILINEAR_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]]) / 4.0
_BILINEAR_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]]) / 4.0


def _finish(rgb: np.ndarray, bayer_dtype) -> np.ndarray:
    return np.clip(rgb, 0.0, 1.0).astype(bayer_dtype if bayer_dtype == np.float64 else np.float32)


def demosaic_bilinear(bayer) -> np.ndarray:
    """Channelwise bilinear interpolation of the missing samples."""
    src = np.asarray(getattr(bayer, "data", bayer))
    cfa = to_cfa(src)
    r_site, g_site, b_site = _site_masks(*cfa.shape[-2:])
    out = []
    for site, kernel in ((r_site, _BILINEAR_RB), (g_site, _BILINEAR_G), (b_site, _BILINEAR_RB)):
        est = _filter(np.where(site, cfa, 0.0), kernel)
        out.append(np.where(site, cfa, est))
    return _finish(np.stack(out, axis=-3), src.dtype)


# Gradient-corrected linear interpolation (Malvar, He & Cutler), taps / 8.
_M_G_AT_RB = np.array([
    [0, 0, -1, 0, 0],
    [0, 0, 2, 0, 0],
    [-1, 2, 4, 2, -1],
    [0, 0, 2, 0, 0],
    [0, 0, -1, 0, 0],
]) / 8.0
_M_RB_AT_G_ROW = np.array([
    [0, 0, 0.5, 0, 0],
    [0, -1, 0, -1, 0],
    [-1, 4, 5, 4, -1],
    [0, -1, 0, -1, 0],
    [0, 0, 0.5, 0, 0],
]) / 8.0
_M_RB_AT_G_COL = _M_RB_AT_G_ROW.T
_M_RB_AT_BR = np.array([
    [0, 0, -1.5, 0, 0],
    [0, 2, 0, 2, 0],
    [-1.5, 0, 6, 0, -1.5],
    [0, 2, 0, 2, 0],
    [0, 0, -1.5, 0, 0],
]) / 8.0


def demosaic_malvar(bayer) -> np.ndarray:
    """Malvar-He-Cutler 5x5 demosaicing; native samples are kept untouched."""
    src = np.asarray(getattr(bayer, "data", bayer))
    cfa = to_cfa(src)
    h2, w2 = cfa.shape[-2:]
    if min(h2, w2) < 3:
        raise ValueError(f"demosaic_malvar needs at least 3x3 CFA samples, got {h2}x{w2}")
    rows = np.arange(h2)[:, None] % 2
    cols = np.arange(w2)[None, :] % 2
    r_site = (rows == 0) & (cols == 0)
    b_site = (rows == 1) & (cols == 1)
    g_in_r_row = (rows == 0) & (cols == 1)
    g_in_b_row = (rows == 1) & (cols == 0)

    g_rb = _filter(cfa, _M_G_AT_RB)
    at_g_row = _filter(cfa, _M_RB_AT_G_ROW)
    at_g_col = _filter(cfa, _M_RB_AT_G_COL)
    at_opp = _filter(cfa, _M_RB_AT_BR)

    green = np.where(r_site | b_site, g_rb, cfa)
    red = np.select([r_site, g_in_r_row, g_in_b_row, b_site], [cfa, at_g_row, at_g_col, at_opp])
    blue = np.select([b_site, g_in_b_row, g_in_r_row, r_site], [cfa, at_g_row, at_g_col, at_opp])
    return _finish(np.stack([red, green, blue], axis=-3), src.dtype)


DEMOSAICERS = {"bilinear": demosaic_bilinear, "malvar": demosaic_malvar}


def demosaic(bayer, method: str = "malvar") -> np.ndarray:
    try:
        fn = DEMOSAICERS[method]
    except KeyError:
        raise ValueError(f"unknown demosaicer {method!r}; choose from {sorted(DEMOSAICERS)}") from None
    return fn(bayer)


def bayer_to_yuv3(bayer: ArrayLike) -> Tensor:
    """Per-site (R, mean(G1, G2), B) mapped through the RGB->YUV matrix."""
    x = as_tensor(bayer)
    _check_bayer(x.data, "bayer_to_yuv3")
    # Folding the green average into the matrix keeps this a single linear op.
    m = np.zeros((3, 4))
    m[:, 0] = RGB_TO_YUV[:, 0]
    m[:, 1] = RGB_TO_YUV[:, 1] * 0.5
    m[:, 2] = RGB_TO_YUV[:, 1] * 0.5
    m[:, 3] = RGB_TO_YUV[:, 2]
    return mix_channels(x, m)
