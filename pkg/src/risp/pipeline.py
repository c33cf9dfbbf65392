"""Groundtruth construction, branch training, mask-fusion inference and
bayer-to-bayer YUV refinement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from . import losses as L
from .bayer import bayer_to_yuv3, demosaic, mosaic
from .color import MaskMode, overexposure_mask
from .model import BranchKind, UNet, UNetConfig, forward, unet_new
from .optim import Adam
from .tensor import Tensor, as_tensor, clamp, no_grad

logger = logging.getLogger(__name__)

GAMMA_HUAWEI = 1.0 / 3.6


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-6
    batch_size: int = 2
    epochs_stage1: int = 30
    epochs_stage2_l2: int = 5
    lr_stage2: float = 1e-5
    gamma_noe: float = 1.0
    seed: int = 0
    epochs_refine: int = 5
    lr_refine: float = 1e-5
    demosaicer: str = "malvar"
    mask_mode: MaskMode = field(default_factory=MaskMode)
    loss_weights: L.LossWeights = field(default_factory=L.LossWeights)
    ms_ssim: L.MsSsimL1Config = field(default_factory=L.MsSsimL1Config)
    depth: int = 3
    base_channels: int = 16

    def __post_init__(self):
        if self.lr <= 0 or self.lr_stage2 <= 0 or self.lr_refine <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if min(self.epochs_stage1, self.epochs_stage2_l2, self.epochs_refine) < 0:
            raise ValueError("epoch counts must be >= 0")

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        return cls(**kw)

    @classmethod
    def s7(cls, **kw) -> "TrainConfig":
        base = dict(batch_size=6, epochs_stage1=200, epochs_stage2_l2=20, gamma_noe=1.0)
        return cls(**{**base, **kw})

    @classmethod
    def huawei(cls, **kw) -> "TrainConfig":
        base = dict(batch_size=6, epochs_stage1=230, epochs_stage2_l2=0, gamma_noe=GAMMA_HUAWEI)
        return cls(**{**base, **kw})

    def unet_config(self, kind: BranchKind) -> UNetConfig:
        offset = {BranchKind.OE: 0, BranchKind.NOE: 1, BranchKind.SINGLE: 2, BranchKind.BASELINE: 3}[kind]
        seed = self.seed * 4 + offset
        if kind is BranchKind.BASELINE:
            return UNetConfig.baseline(self.depth, self.base_channels, seed=seed)
        return UNetConfig(self.depth, self.base_channels, seed=seed)

    def to_text(self) -> str:
        lines = []
        for k in ("lr", "weight_decay", "batch_size", "epochs_stage1", "epochs_stage2_l2", "lr_stage2",
                  "gamma_noe", "seed", "epochs_refine", "lr_refine", "demosaicer", "depth", "base_channels"):
            lines.append(f"{k}={getattr(self, k)!r}" if isinstance(getattr(self, k), float) else f"{k}={getattr(self, k)}")
        lines.append(f"mask_mode={self.mask_mode.kind.value}")
        lines.append(f"mask_threshold={self.mask_mode.threshold!r}")
        lines.append(f"ms_ssim_scales={self.ms_ssim.scale_count}")
        lines.append(f"ms_ssim_kernel={self.ms_ssim.kernel_size}")
        return "\n".join(lines) + "\n"

    def updated(self, items: dict) -> "TrainConfig":
        """Copy with ``key=value`` string overrides (the ``to_text`` keys)."""
        kw = {}
        mask_kind, mask_threshold = self.mask_mode.kind, self.mask_mode.threshold
        scales, kernel = self.ms_ssim.scale_count, self.ms_ssim.kernel_size
        for key, raw in items.items():
            if key == "mask_mode":
                mode = MaskMode.parse(raw)
                mask_kind = mode.kind
                if "mask_threshold" not in items:
                    mask_threshold = mode.threshold
            elif key == "mask_threshold":
                mask_threshold = float(raw)
            elif key == "ms_ssim_scales":
                scales = int(raw)
            elif key == "ms_ssim_kernel":
                kernel = int(raw)
            elif key in _TEXT_FIELDS:
                kw[key] = _TEXT_FIELDS[key](raw)
            else:
                raise ValueError(f"unknown training config key {key!r}")
        ms = self.ms_ssim
        if (scales, kernel) != (ms.scale_count, ms.kernel_size):
            ms = L.MsSsimL1Config.small(scales, kernel, ms.gaussian_sigma, ms.alpha)
        return replace(self, mask_mode=MaskMode(mask_kind, mask_threshold), ms_ssim=ms, **kw)


_TEXT_FIELDS = {
    "lr": float, "weight_decay": float, "batch_size": int, "epochs_stage1": int, "epochs_stage2_l2": int,
    "lr_stage2": float, "gamma_noe": float, "seed": int, "epochs_refine": int, "lr_refine": float,
    "demosaicer": str, "depth": int, "base_channels": int,
}


def parse_key_values(text: str) -> dict:
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


class SamplePair:
    """One training sample: sRGB input ``(3, H, W)`` and packed bayer GT ``(4, H/2, W/2)``."""

    def __init__(self, rgb, bayer_gt):
        self.rgb = np.ascontiguousarray(np.asarray(getattr(rgb, "data", rgb), dtype=np.float32))
        self.bayer_gt = np.ascontiguousarray(np.asarray(getattr(bayer_gt, "data", bayer_gt), dtype=np.float32))
        if self.rgb.ndim != 3 or self.rgb.shape[0] != 3:
            raise ValueError(f"rgb must be (3, H, W), got {self.rgb.shape}")
        if self.bayer_gt.shape != (4, self.rgb.shape[1] // 2, self.rgb.shape[2] // 2) or self.rgb.shape[1] % 2:
            raise ValueError(f"bayer {self.bayer_gt.shape} is not half the size of rgb {self.rgb.shape}")
        self._cache: dict = {}

    @property
    def size(self) -> tuple:
        return self.rgb.shape[1:]

    def mask(self, mode: MaskMode = MaskMode()) -> np.ndarray:
        key = ("mask", mode)
        if key not in self._cache:
            self._cache[key] = overexposure_mask(self.rgb, mode)
        return self._cache[key]

    def gt_full(self, demosaicer: str = "malvar") -> np.ndarray:
        key = ("gt", demosaicer)
        if key not in self._cache:
            self._cache[key] = demosaic(self.bayer_gt, demosaicer)
        return self._cache[key]

    def groundtruths(self, mode: MaskMode = MaskMode(), demosaicer: str = "malvar"):
        return build_groundtruths(self.bayer_gt, self.mask(mode), demosaicer, full=self.gt_full(demosaicer))


def build_groundtruths(bayer_gt, mask, demosaicer: str = "malvar", full=None):
    """Split the demosaiced bayer GT into (gt_oe, gt_noe) by the binary mask."""
    if full is None:
        full = demosaic(bayer_gt, demosaicer)
    m = np.asarray(getattr(mask, "data", mask), dtype=full.dtype)
    if m.ndim == full.ndim - 1:
        m = m[..., None, :, :]
    if m.shape[-2:] != full.shape[-2:]:
        raise ValueError(f"mask shape {m.shape} does not match demosaiced shape {full.shape}")
    return full * m, full * (1 - m)


def fuse(pred_oe, pred_noe, mask) -> np.ndarray:
    """Take overexposed pixels from ``pred_oe`` and the rest from ``pred_noe``, clamp to [0, 1]."""
    a = np.asarray(getattr(pred_oe, "data", pred_oe))
    b = np.asarray(getattr(pred_noe, "data", pred_noe))
    if a.shape != b.shape:
        raise ValueError(f"fuse: prediction shapes differ, {a.shape} vs {b.shape}")
    m = _mask_like(mask, a)
    return np.clip(a * m + b * (1 - m), 0.0, 1.0)


def fuse_soft(pred_oe: Tensor, pred_noe: Tensor, mask) -> Tensor:
    """Differentiable, unclamped mask-weighted sum used during refinement."""
    if pred_oe.shape != pred_noe.shape:
        raise ValueError(f"fuse_soft: prediction shapes differ, {pred_oe.shape} vs {pred_noe.shape}")
    m = _mask_like(mask, pred_oe.data)
    return pred_oe * m + pred_noe * (1 - m)


def _mask_like(mask, ref: np.ndarray) -> np.ndarray:
    m = np.asarray(getattr(mask, "data", mask), dtype=ref.dtype)
    if m.ndim == ref.ndim - 1:
        m = m[..., None, :, :]
    if m.shape[-2:] != ref.shape[-2:] or m.shape[-3] != 1:
        raise ValueError(f"mask shape {m.shape} does not match image shape {ref.shape}")
    return m


# -- training ---------------------------------------------------------------------
class Batch(NamedTuple):
    rgb: np.ndarray
    mask: np.ndarray
    gt_full: np.ndarray
    bayer: np.ndarray


class BranchRun(NamedTuple):
    model: UNet
    losses: List[float]


class TrainingDivergedError(RuntimeError):
    pass


def _stack(data: Sequence[SamplePair], idx, cfg: TrainConfig) -> Batch:
    items = [data[i] for i in idx]
    return Batch(
        np.stack([s.rgb for s in items]),
        np.stack([s.mask(cfg.mask_mode) for s in items]),
        np.stack([s.gt_full(cfg.demosaicer) for s in items]),
        np.stack([s.bayer_gt for s in items]),
    )


def predict(model: UNet, kind: BranchKind, rgb, mask) -> Tensor:
    """Raw network output: demosaiced RAW, or packed bayer for the baseline."""
    if kind is BranchKind.BASELINE:
        return forward(model, rgb)
    return forward(model, rgb, mask)


def branch_objective(kind: BranchKind, cfg: TrainConfig, stage: int) -> Callable[[Tensor, Batch], Tensor]:
    """Loss that ``kind`` minimizes during training ``stage`` (1 or 2)."""
    oe, noe = L.Keep.OVEREXPOSED, L.Keep.NON_OVEREXPOSED
    ms = lambda p, g: L.ms_ssim_l1(p, g, cfg.ms_ssim)  # noqa: E731
    composite = lambda p, g: L.noe_composite(p, g, cfg.loss_weights, cfg.ms_ssim)  # noqa: E731

    if kind is BranchKind.BASELINE:
        return lambda pred, b: L.l2(pred, b.bayer)
    if stage == 2:
        if kind is BranchKind.SINGLE:
            return lambda pred, b: L.l2(pred, b.gt_full)
        keep = oe if kind is BranchKind.OE else noe
        return lambda pred, b: L.masked_loss(L.l2, pred, b.gt_full, b.mask, keep)
    if kind is BranchKind.OE:
        return lambda pred, b: L.masked_loss(ms, pred, b.gt_full, b.mask, oe)
    if kind is BranchKind.NOE:
        noe_loss = lambda p, g: L.gamma_wrapped(composite, p, g, cfg.gamma_noe)  # noqa: E731
        return lambda pred, b: L.masked_loss(noe_loss, pred, b.gt_full, b.mask, noe)
    return lambda pred, b: L.gamma_wrapped(composite, pred, b.gt_full, cfg.gamma_noe)


def _check_data(data: Sequence[SamplePair]) -> None:
    if not data:
        raise ValueError("training data is empty")
    sizes = {s.size for s in data}
    if len(sizes) != 1:
        raise ValueError(f"training patches must share one size, got {sorted(sizes)}")


def _run_epochs(model: UNet, kind: BranchKind, data, cfg: TrainConfig, objective, epochs: int,
                lr: float, rng: np.random.Generator, log: List[float], label: str) -> None:
    if epochs == 0:
        return
    opt = Adam(model.params, lr=lr, weight_decay=cfg.weight_decay)
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        total, count = 0.0, 0
        for bi, start in enumerate(range(0, len(data), cfg.batch_size)):
            batch = _stack(data, order[start:start + cfg.batch_size], cfg)
            opt.zero_grad()
            loss = objective(predict(model, kind, batch.rgb, batch.mask), batch)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"{kind.value} branch: non-finite loss {value} at {label} epoch {epoch + 1}, batch {bi + 1}")
            loss.backward()
            opt.step()
            n = len(batch.rgb)
            total += value * n
            count += n
        log.append(total / count)
        logger.info("%s %s epoch %d loss %.6f", kind.value, label, epoch + 1, log[-1])


def train_branch(data: Sequence[SamplePair], kind: BranchKind, cfg: TrainConfig,
                 model: Optional[UNet] = None) -> BranchRun:
    """Train one network (a fresh one unless ``model`` is given, which is updated in place).

    Stage 1 uses the branch objective at ``cfg.lr``; stage 2 switches to L2
    at ``cfg.lr_stage2``. ``losses`` holds one mean loss per epoch.
    """
    _check_data(data)
    if model is None:
        model = unet_new(cfg.unet_config(kind))
    rng = np.random.default_rng([cfg.seed, list(BranchKind).index(kind)])
    log: List[float] = []
    _run_epochs(model, kind, data, cfg, branch_objective(kind, cfg, 1), cfg.epochs_stage1, cfg.lr, rng, log, "stage1")
    _run_epochs(model, kind, data, cfg, branch_objective(kind, cfg, 2), cfg.epochs_stage2_l2, cfg.lr_stage2,
                rng, log, "stage2")
    return BranchRun(model, log)


# -- inference --------------------------------------------------------------------
def _tiles(h: int, w: int, tile: Optional[int]):
    if tile is None:
        yield slice(0, h), slice(0, w)
        return
    if h % tile or w % tile:
        raise ValueError(f"image {h}x{w} is not divisible into {tile}x{tile} tiles")
    for y in range(0, h, tile):
        for x in range(0, w, tile):
            yield slice(y, y + tile), slice(x, x + tile)


def _infer_demosaiced(rgb: np.ndarray, mask: np.ndarray, model_oe: UNet, model_noe: Optional[UNet]) -> np.ndarray:
    with no_grad():
        a = forward(model_oe, rgb, mask).data
        if model_noe is None:
            return np.clip(a, 0.0, 1.0)
        b = forward(model_noe, rgb, mask).data
    return fuse(a, b, mask)


def infer(rgb, model_oe: UNet, model_noe: Optional[UNet] = None, mode: MaskMode = MaskMode(),
          tile: Optional[int] = None) -> np.ndarray:
    """sRGB ``(3, H, W)`` (or batched) -> packed bayer ``(4, H/2, W/2)``.

    With ``model_noe=None`` the single masked network path is used. ``tile``
    runs each ``tile x tile`` block independently and stitches the results.
    """
    x = np.asarray(getattr(rgb, "data", rgb), dtype=np.float32)
    if x.ndim < 3 or x.shape[-3] != 3:
        raise ValueError(f"infer: expected (3, H, W) input, got {x.shape}")
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"infer: spatial dims must be even, got {h}x{w}")
    mask = overexposure_mask(x, mode)
    out = np.empty(x.shape[:-3] + (3, h, w), dtype=np.float32)
    for ys, xs in _tiles(h, w, tile):
        out[..., ys, xs] = _infer_demosaiced(x[..., ys, xs], mask[..., ys, xs], model_oe, model_noe)
    return mosaic(out).data


def infer_baseline(rgb, model: UNet, tile: Optional[int] = None) -> np.ndarray:
    x = np.asarray(getattr(rgb, "data", rgb), dtype=np.float32)
    h, w = x.shape[-2:]
    out = np.empty(x.shape[:-3] + (4, h // 2, w // 2), dtype=np.float32)
    with no_grad():
        for ys, xs in _tiles(h, w, tile):
            bys = slice(ys.start // 2, ys.stop // 2)
            bxs = slice(xs.start // 2, xs.stop // 2)
            out[..., bys, bxs] = np.clip(forward(model, x[..., ys, xs]).data, 0.0, 1.0)
    return out


# -- YUV refinement ---------------------------------------------------------------
class RefineRun(NamedTuple):
    model_oe: UNet
    model_noe: Optional[UNet]
    losses: List[float]


def _refine_loss(model_oe, model_noe, batch: Batch, loss_fn) -> Tensor:
    pred = forward(model_oe, batch.rgb, batch.mask)
    if model_noe is not None:
        pred = fuse_soft(pred, forward(model_noe, batch.rgb, batch.mask), batch.mask)
    return loss_fn(bayer_to_yuv3(mosaic(pred)), bayer_to_yuv3(batch.bayer))


def yuv_loss(model_oe: UNet, model_noe: Optional[UNet], data: Sequence[SamplePair], cfg: TrainConfig,
             loss_kind: str = "l2") -> float:
    """Mean YUV-space loss of the fused prediction over ``data``."""
    loss_fn = _loss_kind(loss_kind)
    total = 0.0
    with no_grad():
        for start in range(0, len(data), cfg.batch_size):
            batch = _stack(data, range(start, min(start + cfg.batch_size, len(data))), cfg)
            total += _refine_loss(model_oe, model_noe, batch, loss_fn).item() * len(batch.rgb)
    return total / len(data)


def _loss_kind(loss_kind: str):
    try:
        return {"l1": L.l1, "l2": L.l2}[loss_kind.lower()]
    except KeyError:
        raise ValueError(f"refinement loss must be 'l1' or 'l2', got {loss_kind!r}") from None


def yuv_refine(model_oe: UNet, model_noe: Optional[UNet], data: Sequence[SamplePair], cfg: TrainConfig,
               loss_kind: str = "l2", epochs: Optional[int] = None) -> RefineRun:
    """Fine-tune copies of the branch networks on the bayer YUV loss.

    ``losses[0]`` is the training YUV loss before refinement, followed by
    the loss measured after each epoch.
    """
    _check_data(data)
    loss_fn = _loss_kind(loss_kind)
    epochs = cfg.epochs_refine if epochs is None else epochs
    oe = model_oe.copy()
    noe = model_noe.copy() if model_noe is not None else None
    params = oe.params + (noe.params if noe is not None else [])
    log = [yuv_loss(oe, noe, data, cfg, loss_kind)]
    if epochs == 0:
        return RefineRun(oe, noe, log)
    opt = Adam(params, lr=cfg.lr_refine, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, 99])
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        for bi, start in enumerate(range(0, len(data), cfg.batch_size)):
            batch = _stack(data, order[start:start + cfg.batch_size], cfg)
            opt.zero_grad()
            loss = _refine_loss(oe, noe, batch, loss_fn)
            if not np.isfinite(loss.item()):
                raise TrainingDivergedError(f"refinement: non-finite loss at epoch {epoch + 1}, batch {bi + 1}")
            loss.backward()
            opt.step()
        log.append(yuv_loss(oe, noe, data, cfg, loss_kind))
        logger.info("refine epoch %d yuv %s %.6g", epoch + 1, loss_kind, log[-1])
    return RefineRun(oe, noe, log)
