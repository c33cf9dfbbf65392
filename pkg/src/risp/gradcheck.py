"""Central finite-difference oracle.

The analytic gradient comes from the normal float32 graph; the numeric one
re-evaluates the function in float64, perturbing one coordinate at a time.
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def analytic_grads(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray]) -> List[np.ndarray]:
    ts = [Tensor(np.asarray(x, dtype=np.float32), requires_grad=True) for x in inputs]
    out = fn(*ts)
    out.backward()
    return [t.grad.astype(np.float64) if t.grad is not None else np.zeros(t.shape) for t in ts]


def numeric_grad(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], which: int = 0,
                 eps: float = 1e-3, coords: Optional[np.ndarray] = None) -> np.ndarray:
    """d fn / d inputs[which] at the flat indices ``coords`` (all if ``None``)."""
    xs = [np.array(np.asarray(x, dtype=np.float32), dtype=np.float64) for x in inputs]
    target = xs[which].reshape(-1)
    idx = np.arange(target.size) if coords is None else np.asarray(coords)
    out = np.zeros(idx.size)

    def value() -> float:
        with no_grad():
            return float(fn(*[Tensor(x, dtype=np.float64) for x in xs]).data)

    for k, i in enumerate(idx):
        orig = target[i]
        target[i] = orig + eps
        up = value()
        target[i] = orig - eps
        down = value()
        target[i] = orig
        out[k] = (up - down) / (2 * eps)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-2) -> float:
    """Max of ``|a - n| / max(|a|, |n|, floor * max|n|)``.

    The floor keeps coordinates with vanishing gradient from dominating.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = max(np.abs(n).max(initial=0.0), np.abs(a).max(initial=0.0), 1e-12)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor * scale)
    return float((np.abs(a - n) / denom).max(initial=0.0))


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], eps: float = 1e-3,
                    max_coords: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> float:
    """Worst relative error over every input (optionally a random coordinate subset)."""
    rng = rng or np.random.default_rng(0)
    grads = analytic_grads(fn, inputs)
    worst = 0.0
    for i, x in enumerate(inputs):
        size = np.asarray(x).size
        coords = None
        if max_coords is not None and size > max_coords:
            coords = rng.choice(size, size=max_coords, replace=False)
        num = numeric_grad(fn, inputs, i, eps, coords)
        ana = grads[i].reshape(-1) if coords is None else grads[i].reshape(-1)[coords]
        worst = max(worst, relative_error(ana, num))
    return worst
