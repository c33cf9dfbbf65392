"""Differentiable image kernels built on :mod:`risp.tensor`."""

from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ArrayLike, Tensor, as_tensor, make_node


def conv2d(x: ArrayLike, weight: ArrayLike, bias: Optional[ArrayLike] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation on NCHW input with OIHW weights, zero padding."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects NCHW input and OIHW weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, i, kh, kw = weight.shape
    if c != i:
        raise ValueError(f"conv2d: input {x.shape} has {c} channels but weight {weight.shape} expects {i}")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d: invalid stride={stride} / padding={padding}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ValueError(f"conv2d: bias shape {bias.shape} does not match weight {weight.shape}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: kernel {weight.shape} larger than padded input {x.shape}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = weight.data.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (gm.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = gm.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gm @ wmat).reshape(n, ho, wo, c, kh, kw)
            gxp = np.zeros(xp.shape, dtype=xp.dtype)
            for di in range(kh):
                for dj in range(kw):
                    gxp[:, :, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += \
                        gcols[..., di, dj].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward, "conv2d")


def avg_pool_2x2(x: ArrayLike) -> Tensor:
    """Mean over non-overlapping 2x2 blocks of the last two axes."""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool_2x2 needs even spatial dims, got {x.shape}")
    lead = x.shape[:-2]
    out = x.data.reshape(lead + (h // 2, 2, w // 2, 2)).mean(axis=(-3, -1))

    def backward(g):
        g4 = np.broadcast_to((g * 0.25)[..., :, None, :, None], lead + (h // 2, 2, w // 2, 2))
        return (g4.reshape(x.shape),)

    return make_node(out.astype(x.dtype, copy=False), (x,), backward, "avg_pool_2x2")


def upsample_nearest_2x(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    h, w = x.shape[-2:]
    lead = x.shape[:-2]
    out = np.broadcast_to(x.data[..., :, None, :, None], lead + (h, 2, w, 2)).reshape(lead + (2 * h, 2 * w))

    def backward(g):
        return (g.reshape(lead + (h, 2, w, 2)).sum(axis=(-3, -1)),)

    return make_node(np.ascontiguousarray(out), (x,), backward, "upsample_nearest_2x")


def pad_reflect(x: ArrayLike, pad: int, axis: int) -> Tensor:
    """Mirror-pad one axis without repeating the edge sample (numpy ``reflect``)."""
    x = as_tensor(x)
    axis = axis % x.ndim
    n = x.shape[axis]
    if pad == 0:
        return x
    if pad >= n:
        raise ValueError(f"reflect padding {pad} needs an axis longer than {pad}, got {n}")
    widths = [(0, 0)] * x.ndim
    widths[axis] = (pad, pad)
    out = np.pad(x.data, widths, mode="reflect")

    def backward(g):
        gm = np.moveaxis(g, axis, 0)
        gx = gm[pad:pad + n].copy()
        gx[1:pad + 1] += gm[:pad][::-1]
        gx[n - 1 - pad:n - 1] += gm[pad + n:][::-1]
        return (np.moveaxis(gx, 0, axis),)

    return make_node(out, (x,), backward, "pad_reflect")


def correlate_valid(x: ArrayLike, kernel: np.ndarray, axis: int) -> Tensor:
    """1-D valid cross-correlation of a constant kernel along ``axis``."""
    x = as_tensor(x)
    axis = axis % x.ndim
    k = np.asarray(kernel, dtype=x.dtype)
    size = len(k)
    n_out = x.shape[axis] - size + 1
    xm = np.moveaxis(x.data, axis, 0)
    acc = k[0] * xm[0:n_out]
    for t in range(1, size):
        acc = acc + k[t] * xm[t:t + n_out]
    out = np.ascontiguousarray(np.moveaxis(acc, 0, axis))

    def backward(g):
        gm = np.moveaxis(g, axis, 0)
        gx = np.zeros(xm.shape, dtype=g.dtype)
        for t in range(size):
            gx[t:t + n_out] += k[t] * gm
        return (np.moveaxis(gx, 0, axis),)

    return make_node(out, (x,), backward, "correlate_valid")


@lru_cache(maxsize=32)
def _gaussian_taps(sigma: float, size: int) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(r**2) / (2.0 * sigma**2))
    k /= k.sum()
    k.setflags(write=False)
    return k


def gaussian_kernel1d(sigma: float, kernel_size: int) -> np.ndarray:
    """Normalized 1-D Gaussian taps (float64)."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"gaussian kernel_size must be odd and positive, got {kernel_size}")
    if sigma <= 0:
        raise ValueError(f"gaussian sigma must be positive, got {sigma}")
    return _gaussian_taps(float(sigma), int(kernel_size))


def gaussian_blur(x: ArrayLike, sigma: float = 1.5, kernel_size: int = 11) -> Tensor:
    """Separable Gaussian filter over the last two axes with reflect padding."""
    taps = gaussian_kernel1d(sigma, kernel_size)
    x = as_tensor(x)
    r = kernel_size // 2
    y = correlate_valid(pad_reflect(x, r, axis=-2), taps, axis=-2)
    return correlate_valid(pad_reflect(y, r, axis=-1), taps, axis=-1)
