"""Independent reference implementations used only by the tests."""

import numpy as np
from scipy.ndimage import correlate


def ref_psnr(a, b):
    mse = np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2)
    return 10 * np.log10(1.0 / mse)


def gauss2d(sigma=1.5, size=11):
    r = np.arange(size) - size // 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma**2))
    return g / g.sum()


def ref_ssim_maps(x, y, sigma=1.5, size=11, c1=1e-4, c2=9e-4):
    """Luminance and contrast-structure maps for 2-D images, 2-D window, mirror borders."""
    k = gauss2d(sigma, size)
    f = lambda z: correlate(z, k, mode="mirror")  # noqa: E731
    mx, my = f(x), f(y)
    sxx = f(x * x) - mx * mx
    syy = f(y * y) - my * my
    sxy = f(x * y) - mx * my
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return lum, cs


def ref_ssim(a, b, sigma=1.5, size=11):
    """Channel-mean of per-channel SSIM for ``(C, H, W)`` float arrays."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    vals = []
    for x, y in zip(a.reshape(-1, *a.shape[-2:]), b.reshape(-1, *b.shape[-2:])):
        lum, cs = ref_ssim_maps(x, y, sigma, size)
        vals.append((lum * cs).mean())
    return float(np.mean(vals))


def ref_ms_ssim(a, b, weights, sigma=1.5, size=11):
    """Mean over the leading axes is taken jointly, matching a single ``.mean()`` per scale."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    out = 1.0
    for j, w in enumerate(weights):
        planes = list(zip(a.reshape(-1, *a.shape[-2:]), b.reshape(-1, *b.shape[-2:])))
        maps = [ref_ssim_maps(x, y, sigma, size) for x, y in planes]
        last = j == len(weights) - 1
        v = np.mean([(l * c).mean() if last else c.mean() for l, c in maps])
        out *= ((v + 1) / 2) ** w
        if not last:
            h, wd = a.shape[-2:]
            a = a.reshape(a.shape[:-2] + (h // 2, 2, wd // 2, 2)).mean(axis=(-3, -1))
            b = b.reshape(b.shape[:-2] + (h // 2, 2, wd // 2, 2)).mean(axis=(-3, -1))
    return out


def ref_blur(x, sigma=1.5, size=11):
    x = np.asarray(x, np.float64)
    k = gauss2d(sigma, size)
    flat = x.reshape(-1, *x.shape[-2:])
    return np.stack([correlate(p, k, mode="mirror") for p in flat]).reshape(x.shape)
