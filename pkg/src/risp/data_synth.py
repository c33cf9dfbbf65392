"""Synthetic forward-ISP data: linear RAW scenes with controllable highlights,
rendered to sRGB, for paired (RGB, bayer) training patches."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.ndimage import zoom

from . import rtn
from .bayer import mosaic
from .color import MaskMode, overexposure_mask
from .pipeline import SamplePair

DISPLAY_GAMMA = 1.0 / 2.2
# Camera RAW is green-dominant; R and B sit roughly one white-balance gain below.
RAW_TINT = np.array([0.5, 1.0, 0.5])
BASE_CEILING = 0.45
CORE_LEVEL = 0.7
OVERSHOOT = 0.04


@dataclass
class IspParams:
    wb_gains: Tuple[float, float] = (2.0, 1.8)
    ccm: np.ndarray = field(default_factory=lambda: np.eye(3))
    display_gamma: float = DISPLAY_GAMMA
    seed: int = 0

    def __post_init__(self):
        self.ccm = np.asarray(self.ccm, dtype=np.float64).reshape(3, 3)
        if min(self.wb_gains) <= 0:
            raise ValueError(f"white-balance gains must be positive, got {self.wb_gains}")
        if np.abs(self.ccm.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("color matrix rows must sum to 1")

    @classmethod
    def random(cls, seed: int) -> "IspParams":
        rng = np.random.default_rng([seed, 0x15B])
        gains = tuple(float(g) for g in rng.uniform(1.5, 2.5, size=2))
        off = -rng.uniform(0.05, 0.3, size=(3, 3))
        np.fill_diagonal(off, 0.0)
        ccm = off + np.diag(1.0 - off.sum(axis=1))
        return cls(gains, ccm, DISPLAY_GAMMA, seed)

    def to_text(self) -> str:
        lines = [f"wb_r={float(self.wb_gains[0])!r}", f"wb_b={float(self.wb_gains[1])!r}",
                 f"display_gamma={float(self.display_gamma)!r}", f"seed={self.seed}"]
        lines += [f"ccm{i}{j}={float(self.ccm[i, j])!r}" for i in range(3) for j in range(3)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "IspParams":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        ccm = [[float(kv[f"ccm{i}{j}"]) for j in range(3)] for i in range(3)]
        return cls((float(kv["wb_r"]), float(kv["wb_b"])), np.array(ccm),
                   float(kv["display_gamma"]), int(kv["seed"]))


@dataclass
class SceneSpec:
    size: int = 64
    highlight_fraction: float = 0.25
    texture_octaves: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.size < 32 or self.size % 2:
            raise ValueError(f"scene size must be even and >= 32, got {self.size}")
        if not 0.0 <= self.highlight_fraction <= 0.9:
            raise ValueError(f"highlight_fraction must be in [0, 0.9], got {self.highlight_fraction}")
        if self.texture_octaves < 1:
            raise ValueError("texture_octaves must be >= 1")


def value_noise(size: int, octaves: int, rng: np.random.Generator) -> np.ndarray:
    """Sum of cubic-upsampled random grids, normalized to [0, 1]."""
    acc = np.zeros((size, size))
    amp, total = 1.0, 0.0
    for o in range(octaves):
        cells = 2 ** (o + 2)
        grid = rng.random((cells + 1, cells + 1))
        up = zoom(grid, size / (cells + 1), order=3, mode="nearest", grid_mode=True)[:size, :size]
        acc += amp * up
        total += amp
        amp *= 0.5
    acc /= total
    lo, hi = acc.min(), acc.max()
    return (acc - lo) / (hi - lo) if hi > lo else np.zeros_like(acc)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _shapes(size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Soft-edged rectangles and disks: per-pixel coverage and color."""
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    cover = np.zeros((size, size))
    color = np.zeros((3, size, size))
    for _ in range(rng.integers(2, 6)):
        c = rng.uniform(0.1, 1.0, size=3)
        if rng.random() < 0.5:
            y0, x0 = rng.uniform(0, size, 2)
            hh, ww = rng.uniform(size / 10, size / 3, 2)
            dist = np.maximum(np.abs(yy - y0) - hh / 2, np.abs(xx - x0) - ww / 2)
        else:
            y0, x0 = rng.uniform(0, size, 2)
            r = rng.uniform(size / 12, size / 5)
            dist = np.hypot(yy - y0, xx - x0) - r
        a = _smoothstep(0.5 - dist / 1.5)
        cover = cover * (1 - a) + a
        color = color * (1 - a) + a * c[:, None, None]
    return cover, color


def _highlights(size: int, fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Blend weight ``h`` (1 in saturated cores) and per-highlight RAW color."""
    h = np.zeros((size, size))
    color = np.zeros((3, size, size))
    if fraction <= 0:
        return h, color
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    for _ in range(400):
        if (h >= CORE_LEVEL).mean() >= fraction:
            break
        y0, x0 = rng.uniform(0, size, 2)
        a, b = rng.uniform(size / 14, size / 4, 2)
        theta = rng.uniform(0, np.pi)
        ct, st = np.cos(theta), np.sin(theta)
        u = ((xx - x0) * ct + (yy - y0) * st) / a
        v = (-(xx - x0) * st + (yy - y0) * ct) / b
        radius = np.sqrt(u * u + v * v)
        falloff = rng.uniform(0.15, 0.5)
        w = _smoothstep((1.0 + falloff - radius) / falloff)
        c = np.array([rng.uniform(0.7, 1.0), 1.0, rng.uniform(0.7, 1.0)])
        if (np.maximum(h, w) >= CORE_LEVEL).mean() > fraction + OVERSHOOT:
            continue
        newer = w > h
        color = np.where(newer, c[:, None, None], color)
        h = np.maximum(h, w)
    return h, color


def synth_raw_scene(spec: SceneSpec) -> np.ndarray:
    """Linear demosaiced RAW scene ``(3, S, S)`` in [0, 1]."""
    rng = np.random.default_rng(spec.seed)
    s = spec.size
    lum = value_noise(s, spec.texture_octaves, rng)
    chroma = np.stack([value_noise(s, max(1, spec.texture_octaves - 1), rng) for _ in range(3)])
    tint = rng.uniform(0.4, 1.0, size=3)
    base = (0.25 + 0.75 * lum)[None] * (0.6 + 0.4 * chroma) * tint[:, None, None]
    cover, shape_color = _shapes(s, rng)
    texture = 0.8 + 0.2 * lum
    base = base * (1 - cover) + cover * shape_color * texture
    exposure = rng.uniform(0.6, 1.0) * BASE_CEILING
    raw = base * exposure * RAW_TINT[:, None, None]
    h, hl_color = _highlights(s, spec.highlight_fraction, rng)
    raw = raw * (1 - h) + h * hl_color
    return np.clip(raw, 0.0, 1.0).astype(np.float32)


def forward_isp(raw, p: IspParams) -> np.ndarray:
    """White balance, clip to sensor range, color matrix, display gamma, clamp."""
    x = np.asarray(getattr(raw, "data", raw), dtype=np.float64)
    if x.ndim < 3 or x.shape[-3] != 3:
        raise ValueError(f"forward_isp: expected (3, H, W), got {x.shape}")
    gains = np.array([p.wb_gains[0], 1.0, p.wb_gains[1]])
    x = np.clip(x * gains[:, None, None], 0.0, 1.0)
    x = np.einsum("ij,...jhw->...ihw", p.ccm, x)
    x = np.clip(x, 0.0, 1.0) ** p.display_gamma
    return np.clip(x, 0.0, 1.0).astype(np.float32)


def sample_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def synth_pairs(n: int, spec: SceneSpec, params: IspParams, start: int = 0) -> List[Tuple[SamplePair, int, float]]:
    """In-memory version of :func:`make_dataset`: (pair, seed, measured OE fraction)."""
    out = []
    for i in range(start, start + n):
        seed = sample_seed(spec.seed, i)
        scene = synth_raw_scene(SceneSpec(spec.size, spec.highlight_fraction, spec.texture_octaves, seed))
        rgb = forward_isp(scene, params)
        bayer = mosaic(scene).data
        frac = float(overexposure_mask(rgb, MaskMode()).mean())
        out.append((SamplePair(rgb, bayer), seed, frac))
    return out


def make_dataset(n: int, spec: SceneSpec, params: IspParams, out_dir: Union[str, os.PathLike]) -> Path:
    """Write ``n`` pairs plus ``manifest.txt`` and ``isp.txt``; returns the manifest path."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        lines = []
        for i, (pair, seed, frac) in enumerate(synth_pairs(n, spec, params)):
            rgb_name, bayer_name = f"rgb_{i:04d}.rtn1", f"bayer_{i:04d}.rtn1"
            rtn.save_tensor(out / rgb_name, pair.rgb)
            rtn.save_tensor(out / bayer_name, pair.bayer_gt)
            lines.append(f"{i},{rgb_name},{bayer_name},{seed},{frac!r}\n")
        manifest = out / "manifest.txt"
        manifest.write_text("".join(lines))
        (out / "isp.txt").write_text(params.to_text())
    except OSError as e:
        raise OSError(f"writing dataset to {out}: {e}") from e
    return manifest


@dataclass
class ManifestEntry:
    index: int
    rgb_path: Path
    bayer_path: Path
    seed: int
    oe_fraction: float


def read_manifest(path: Union[str, os.PathLike]) -> List[ManifestEntry]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.txt"
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 comma-separated fields")
        entries.append(ManifestEntry(int(parts[0]), path.parent / parts[1], path.parent / parts[2],
                                     int(parts[3]), float(parts[4])))
    return entries


def load_dataset(path: Union[str, os.PathLike]) -> List[SamplePair]:
    return [SamplePair(rtn.load_tensor(e.rgb_path), rtn.load_tensor(e.bayer_path)) for e in read_manifest(path)]


def load_isp_params(path: Union[str, os.PathLike]) -> Optional[IspParams]:
    path = Path(path)
    if path.is_dir():
        path = path / "isp.txt"
    return IspParams.from_text(path.read_text()) if path.exists() else None
