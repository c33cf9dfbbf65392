"""Dense tensor with reverse-mode automatic differentiation.

Every differentiable operation builds a node holding its parents and a
closure mapping the output gradient to one gradient per parent.
``Tensor.backward`` walks the graph in reverse topological order.

Data is float32 unless a tensor is built explicitly with ``dtype=np.float64``;
operations keep the dtype of their inputs, which lets finite-difference
oracles re-run any graph in double precision.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def _checked() -> bool:
    return getattr(_state, "checked", False)


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def checked_mode(enabled: bool = True):
    """Raise ``FloatingPointError`` as soon as an op produces NaN or Inf."""
    prev = _checked()
    _state.checked = enabled
    try:
        yield
    finally:
        _state.checked = prev


def is_checked() -> bool:
    return _checked()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = np.float32
        self.data = np.asarray(data, dtype=dtype, order="C")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.op = "leaf"

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data, requires_grad=self.requires_grad, dtype=dtype)

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph ------------------------------------------------------------
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Populate ``.grad`` on every tensor upstream of ``self``.

        Leaf gradients accumulate across calls; intermediate gradients are
        overwritten by each call.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(
                    f"backward() needs a scalar loss, got shape {self.shape}; "
                    "pass an explicit output gradient for non-scalar tensors"
                )
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.shape)
        if not self.requires_grad:
            raise ValueError("backward() called on a tensor that does not require grad")

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            node.grad = g
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator overloads ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def abs(self):
        return absolute(self)


def as_tensor(x: ArrayLike, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _const_like(x: ArrayLike, ref: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=ref.dtype)


def make_node(data: np.ndarray, parents: Iterable[Tensor], backward: Callable, op: str) -> Tensor:
    """Wrap ``data`` as the output of an op; record the graph edge if needed."""
    parents = tuple(parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if _checked() and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by {op}")
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _pair(a: ArrayLike, b: ArrayLike) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _const_like(b, a)
    if isinstance(b, Tensor):
        return _const_like(a, b), b
    a = as_tensor(a)
    return a, _const_like(b, a)


# -- elementwise --------------------------------------------------------------
def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), backward, "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return make_node(a.data - b.data, (a, b), backward, "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data * b.data, (a, b), backward, "mul")


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data

    def backward(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), backward, "div")


def power(x: ArrayLike, exponent: float) -> Tensor:
    """``x ** exponent`` for a constant scalar exponent."""
    x = as_tensor(x)
    p = float(exponent)
    out = x.data**p

    def backward(g):
        return (g * (p * x.data ** (p - 1.0)),)

    return make_node(out, (x,), backward, "pow")


def absolute(x: ArrayLike) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        return (g * np.sign(x.data),)

    return make_node(np.abs(x.data), (x,), backward, "abs")


def sqrt(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)

    def backward(g):
        return (g * 0.5 / out,)

    return make_node(out, (x,), backward, "sqrt")


def clamp(x: ArrayLike, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    """Clip to ``[lo, hi]``; gradient passes only where the input is inside."""
    x = as_tensor(x)
    out = np.clip(x.data, lo, hi)

    def backward(g):
        keep = np.ones(x.shape, dtype=bool)
        if lo is not None:
            keep &= x.data >= lo
        if hi is not None:
            keep &= x.data <= hi
        return (g * keep,)

    return make_node(out, (x,), backward, "clamp")


def leaky_relu(x: ArrayLike, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    out = np.where(pos, x.data, x.data * slope)

    def backward(g):
        return (np.where(pos, g, g * slope),)

    return make_node(out.astype(x.dtype, copy=False), (x,), backward, "leaky_relu")


# -- reductions and shape ops -------------------------------------------------
def _norm_axes(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def reduce_sum(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_node(np.asarray(out, dtype=x.dtype), (x,), backward, "sum")


def reduce_mean(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return make_node(np.asarray(out, dtype=x.dtype), (x,), backward, "mean")


def reshape(x: ArrayLike, shape: tuple) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        return (g.reshape(x.shape),)

    return make_node(x.data.reshape(shape), (x,), backward, "reshape")


def getitem(x: ArrayLike, index) -> Tensor:
    x = as_tensor(x)
    out = np.asarray(x.data[index], order="C")

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(p is Ellipsis or p is None or isinstance(p, (slice, int)) for p in parts)

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return make_node(out, (x,), backward, "getitem")


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ref = ts[0]
    ts = [t if t.dtype == ref.dtype else t.astype(ref.dtype) for t in ts]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return make_node(out, ts, backward, "concat")


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in ts]
    return concat(expanded, axis=axis)


def concat_channels(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Concatenate along the channel axis (third from last)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != b.ndim or a.ndim < 3 or a.shape[:-3] != b.shape[:-3] or a.shape[-2:] != b.shape[-2:]:
        raise ValueError(f"concat_channels: incompatible shapes {a.shape} and {b.shape}")
    return concat([a, b], axis=a.ndim - 3)


def mix_channels(x: ArrayLike, matrix: np.ndarray) -> Tensor:
    """Left-multiply every pixel's channel vector by a constant matrix.

    ``x`` has channels on axis -3; ``matrix`` is (out_channels, in_channels).
    """
    x = as_tensor(x)
    m = np.asarray(matrix, dtype=x.dtype)
    if x.ndim < 3 or x.shape[-3] != m.shape[1]:
        raise ValueError(f"mix_channels: input shape {x.shape} does not match matrix shape {m.shape}")
    out = np.einsum("ij,...jhw->...ihw", m, x.data)

    def backward(g):
        return (np.einsum("ji,...jhw->...ihw", m, g),)

    return make_node(np.ascontiguousarray(out), (x,), backward, "mix_channels")


def zeros(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), dtype=dtype)


def ones(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), dtype=dtype)
