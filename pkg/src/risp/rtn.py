"""RTN1 binary tensor files.

Layout: magic ``b"RTN1"``, uint32 LE ``ndim``, ``ndim`` uint32 LE dims, then
the float32 LE payload in row-major order.
"""

from __future__ import annotations

import os
import struct
from typing import BinaryIO, Union

import numpy as np

MAGIC = b"RTN1"
_U32 = struct.Struct("<I")


class RtnFormatError(ValueError):
    pass


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise RtnFormatError(f"truncated RTN1 data while reading {what} ({len(buf)} of {n} bytes)")
    return buf


def write_tensor(f: BinaryIO, array) -> None:
    a = np.asarray(getattr(array, "data", array), dtype="<f4")
    f.write(MAGIC)
    f.write(_U32.pack(a.ndim))
    for d in a.shape:
        f.write(_U32.pack(d))
    f.write(np.asarray(a, order="C").tobytes())


def read_tensor(f: BinaryIO) -> np.ndarray:
    magic = _read_exact(f, 4, "magic")
    if magic != MAGIC:
        raise RtnFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (ndim,) = _U32.unpack(_read_exact(f, 4, "ndim"))
    if ndim > 32:
        raise RtnFormatError(f"implausible ndim {ndim}")
    dims = tuple(_U32.unpack(_read_exact(f, 4, "dims"))[0] for _ in range(ndim))
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    payload = _read_exact(f, 4 * count, f"payload of shape {dims}")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)


def save_tensor(path: Union[str, os.PathLike], array) -> None:
    with open(path, "wb") as f:
        write_tensor(f, array)


def load_tensor(path: Union[str, os.PathLike]) -> np.ndarray:
    with open(path, "rb") as f:
        arr = read_tensor(f)
        if f.read(1):
            raise RtnFormatError(f"{path}: trailing bytes after tensor payload")
    return arr
