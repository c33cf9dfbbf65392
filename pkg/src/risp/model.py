"""Small U-Net encoder-decoder mapping RGB (+ mask) to demosaiced RAW."""

from __future__ import annotations

import copy
import io
import os
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from . import rtn
from .functional import avg_pool_2x2, conv2d, upsample_nearest_2x
from .tensor import ArrayLike, Tensor, as_tensor, concat_channels, leaky_relu


class BranchKind(Enum):
    OE = "oe"
    NOE = "noe"
    SINGLE = "single"
    # Plain RGB -> packed bayer reference model (no mask, pooled 4-plane head).
    BASELINE = "baseline"


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 3
    base_channels: int = 16
    in_channels: int = 4
    out_channels: int = 3
    leaky_slope: float = 0.2
    seed: int = 0
    bayer_head: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ValueError(f"channel counts must be positive: {self}")

    @property
    def multiple(self) -> int:
        return 2**self.depth

    @classmethod
    def baseline(cls, depth: int = 3, base_channels: int = 16, seed: int = 0) -> "UNetConfig":
        return cls(depth, base_channels, in_channels=3, out_channels=4, seed=seed, bayer_head=True)

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in asdict(self).items())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


class ConfigMismatchError(ValueError):
    pass


def conv_shapes(cfg: UNetConfig) -> List[tuple]:
    """(out, in, k, k) for every conv in declaration order."""
    shapes = []
    width = [cfg.base_channels * 2**level for level in range(cfg.depth)]
    prev = cfg.in_channels
    for ch in width:
        shapes += [(ch, prev, 3, 3), (ch, ch, 3, 3)]
        prev = ch
    for level in range(cfg.depth - 2, -1, -1):
        ch = width[level]
        shapes += [(ch, prev + ch, 3, 3), (ch, ch, 3, 3)]
        prev = ch
    shapes.append((cfg.out_channels, prev, 1, 1))
    return shapes


class UNet:
    """Encoder of ``depth`` levels (two 3x3 convs each, 2x2 average pooling
    between levels) mirrored by a decoder with nearest upsampling and
    concatenated skips; a 1x1 linear head produces the output channels."""

    def __init__(self, cfg: UNetConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        gain = np.sqrt(2.0 / (1.0 + cfg.leaky_slope**2))
        self.params: List[Tensor] = []
        for shape in conv_shapes(cfg):
            fan_in = shape[1] * shape[2] * shape[3]
            bound = gain * np.sqrt(3.0 / fan_in)
            w = rng.uniform(-bound, bound, size=shape).astype(np.float32)
            self.params.append(Tensor(w, requires_grad=True))
            self.params.append(Tensor(np.zeros(shape[0], np.float32), requires_grad=True))

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params)

    def __call__(self, x: ArrayLike) -> Tensor:
        x = as_tensor(x)
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ValueError(f"UNet expects (N, {cfg.in_channels}, H, W) input, got {x.shape}")
        h, w = x.shape[-2:]
        if h % cfg.multiple or w % cfg.multiple:
            raise ValueError(f"input {h}x{w} is not divisible by 2**depth = {cfg.multiple}")
        it = iter(zip(self.params[0::2], self.params[1::2]))
        act = lambda t: leaky_relu(t, cfg.leaky_slope)  # noqa: E731

        def block(t):
            for _ in range(2):
                wt, b = next(it)
                t = act(conv2d(t, wt, b, padding=1))
            return t

        skips = []
        t = x
        for level in range(cfg.depth):
            if level:
                skips.append(t)
                t = avg_pool_2x2(t)
            t = block(t)
        for _ in range(cfg.depth - 1):
            t = concat_channels(upsample_nearest_2x(t), skips.pop())
            t = block(t)
        wt, b = next(it)
        out = conv2d(t, wt, b)
        if cfg.bayer_head:
            out = avg_pool_2x2(out)
        return out

    def copy(self) -> "UNet":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "UNet":
        clone = self.copy()
        clone.params = [Tensor(p.data, requires_grad=p.requires_grad, dtype=dtype) for p in self.params]
        return clone

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_equal(self, other: "UNet") -> bool:
        return self.cfg == other.cfg and all(np.array_equal(a.data, b.data) for a, b in zip(self.params, other.params))


def unet_new(cfg: UNetConfig) -> UNet:
    return UNet(cfg)


def forward(model: UNet, rgb: ArrayLike, mask=None) -> Tensor:
    """Run ``model`` on a (batched or single) channel-first RGB image.

    The mask becomes the fourth input channel when the model expects one.
    Output keeps the batch layout of ``rgb``.
    """
    x = as_tensor(rgb)
    single = x.ndim == 3
    if single:
        x = x.reshape((1,) + x.shape)
    if model.cfg.in_channels == 4:
        if mask is None:
            raise ValueError("this model takes the overexposure mask as a fourth channel")
        m = np.asarray(getattr(mask, "data", mask), dtype=x.dtype)
        target = (x.shape[0], 1) + x.shape[-2:]
        if m.size != int(np.prod(target)) or m.shape[-2:] != x.shape[-2:]:
            raise ValueError(f"mask shape {m.shape} does not match image shape {x.shape}")
        m = m.reshape(target)
        x = concat_channels(x, Tensor(m, dtype=x.dtype))
    out = model(x)
    return out.reshape(out.shape[1:]) if single else out


# -- serialization ------------------------------------------------------------
# Header record: [depth, base_channels, in_channels, out_channels, leaky_slope, bayer_head, n_params].
_HEADER_FIELDS = ("depth", "base_channels", "in_channels", "out_channels", "leaky_slope", "bayer_head")


def _header(cfg: UNetConfig, n_params: int) -> np.ndarray:
    vals = [getattr(cfg, f) for f in _HEADER_FIELDS]
    return np.array([float(v) for v in vals] + [float(n_params)], dtype=np.float32)


def save_weights(model: UNet, path: Union[str, os.PathLike]) -> None:
    """RTN1 container: a config header record, then every parameter in order.

    A ``key=value`` sidecar with the full config is written next to it.
    """
    path = Path(path)
    buf = io.BytesIO()
    rtn.write_tensor(buf, _header(model.cfg, len(model.params)))
    for p in model.params:
        rtn.write_tensor(buf, p.data)
    path.write_bytes(buf.getvalue())
    sidecar_path(path).write_text(model.cfg.to_text())


def sidecar_path(path: Union[str, os.PathLike]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".cfg")


def _read_sidecar(path: Path) -> dict:
    out = {}
    if path.exists():
        for line in path.read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out


def load_weights(path: Union[str, os.PathLike], expected: Optional[UNetConfig] = None) -> UNet:
    """Read a weight file; ``expected`` (if given) must match the stored config."""
    path = Path(path)
    data = path.read_bytes()
    f = io.BytesIO(data)
    header = rtn.read_tensor(f)
    if header.shape != (len(_HEADER_FIELDS) + 1,):
        raise rtn.RtnFormatError(f"{path}: malformed weight header of shape {header.shape}")
    stored = dict(zip(_HEADER_FIELDS, header[:-1].tolist()))
    side = _read_sidecar(sidecar_path(path))
    cfg = UNetConfig(
        depth=int(stored["depth"]),
        base_channels=int(stored["base_channels"]),
        in_channels=int(stored["in_channels"]),
        out_channels=int(stored["out_channels"]),
        leaky_slope=float(side.get("leaky_slope", stored["leaky_slope"])),
        seed=int(side.get("seed", 0)),
        bayer_head=bool(stored["bayer_head"]),
    )
    if expected is not None:
        for fld in fields(UNetConfig):
            if fld.name == "seed":
                continue
            a, b = getattr(expected, fld.name), getattr(cfg, fld.name)
            if isinstance(a, float):
                differs = np.float32(a) != np.float32(b)
            else:
                differs = a != b
            if differs:
                raise ConfigMismatchError(f"{path}: config field {fld.name!r} is {b!r}, expected {a!r}")
    model = UNet.__new__(UNet)
    model.cfg = cfg
    model.params = []
    shapes = conv_shapes(cfg)
    if int(header[-1]) != 2 * len(shapes):
        raise rtn.RtnFormatError(f"{path}: header declares {int(header[-1])} tensors, config implies {2 * len(shapes)}")
    for shape in shapes:
        for want in (shape, (shape[0],)):
            arr = rtn.read_tensor(f)
            if arr.shape != want:
                raise rtn.RtnFormatError(f"{path}: parameter shape {arr.shape}, expected {want}")
            model.params.append(Tensor(arr, requires_grad=True))
    if f.read(1):
        raise rtn.RtnFormatError(f"{path}: trailing bytes after the last parameter")
    return model
