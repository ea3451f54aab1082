"""Reverse-mode differentiation over dense numpy arrays.

A Tensor wraps an array of rank 0..3; ops record themselves on the active
Tape together with a vector-Jacobian product closure.  ``Tape.backward``
replays the records in exact reverse execution order, summing contributions
into ``grad`` wherever a tensor feeds several ops.  No op mutates its inputs.

The op set is exactly what the depth-aware recalibration module, its host
ConvNeXt-style blocks, and the toy training loop need; there is no general
broadcasting (the only broadcast is a channel vector against a C x H x W
map).  In ``verify`` precision mode every op output is checked finite.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy.special import erf, expit

from .config import active_dtype, verification_enabled
from .errors import BoundsError, DegeneratePoolError, ShapeError, ValidationError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Dense rank-0..3 array that can participate in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else active_dtype())
        if arr.ndim > 3:
            raise ShapeError(f"tensors support rank <= 3, got shape {arr.shape}")
        if verification_enabled() and not np.all(np.isfinite(arr)):
            raise ValidationError("tensor data contains NaN or Inf")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


_tapes = threading.local()


def _tape_stack() -> list:
    stack = getattr(_tapes, "stack", None)
    if stack is None:
        stack = []
        _tapes.stack = stack
    return stack


class Tape:
    """Ordered record of executed ops; backward replays it in reverse.

    Use as a context manager around the forward pass.  Ops only record while
    a tape is active and at least one input requires a gradient, so forward
    passes outside a tape run at plain numpy cost.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        _tape_stack().pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, root: Tensor) -> None:
        """Accumulate gradients of ``root`` into every recorded tensor's ``grad``."""
        if root.grad is None:
            root.grad = np.ones_like(root.data)
        for out, inputs, vjp in reversed(self._records):
            if out.grad is None:
                continue
            grads = vjp(out.grad)
            for tensor, grad in zip(inputs, grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.grad is None:
                    tensor.grad = grad.copy() if isinstance(grad, np.ndarray) else np.asarray(grad)
                else:
                    tensor.grad = tensor.grad + grad


def _active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    """Wrap an op result, recording it when gradients can flow."""
    if verification_enabled() and not np.all(np.isfinite(data)):
        raise ValidationError("op produced NaN or Inf")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._records.append((out, inputs, vjp))
    else:
        out.requires_grad = False
    return out


def as_tensor(value, dtype=None) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value, dtype=dtype)


def constant(value, dtype=None) -> Tensor:
    return Tensor(value, requires_grad=False, dtype=dtype)


def parameter(value, dtype=None) -> Tensor:
    return Tensor(value, requires_grad=True, dtype=dtype)


def _channel_pair(a: Tensor, b: Tensor):
    """Classify operand shapes: equal, or a channel vector against (C, H, W)."""
    if a.shape == b.shape:
        return "equal"
    if a.ndim == 3 and b.ndim == 1 and b.shape[0] == a.shape[0]:
        return "vec_right"
    if a.ndim == 1 and b.ndim == 3 and a.shape[0] == b.shape[0]:
        return "vec_left"
    raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}")


def add(a, b) -> Tensor:
    """Elementwise sum; a channel vector broadcasts over the spatial extent."""
    a, b = as_tensor(a), as_tensor(b)
    kind = _channel_pair(a, b)
    if kind == "equal":
        data = a.data + b.data
        vjp = lambda g: (g, g)
    elif kind == "vec_right":
        data = a.data + b.data[:, None, None]
        vjp = lambda g: (g, g.sum(axis=(1, 2)))
    else:
        data = a.data[:, None, None] + b.data
        vjp = lambda g: (g.sum(axis=(1, 2)), g)
    return _make(data, (a, b), vjp)


def mul(a, b) -> Tensor:
    """Elementwise product; a channel vector broadcasts over the spatial extent."""
    a, b = as_tensor(a), as_tensor(b)
    kind = _channel_pair(a, b)
    if kind == "equal":
        data = a.data * b.data
        vjp = lambda g: (g * b.data, g * a.data)
    elif kind == "vec_right":
        data = a.data * b.data[:, None, None]
        vjp = lambda g: (g * b.data[:, None, None], np.einsum("chw,chw->c", g, a.data))
    else:
        data = a.data[:, None, None] * b.data
        vjp = lambda g: (np.einsum("chw,chw->c", g, b.data), g * a.data[:, None, None])
    return _make(data, (a, b), vjp)


def scalar_mul(x, value: float) -> Tensor:
    x = as_tensor(x)
    c = float(value)
    return _make(x.data * c, (x,), lambda g: (g * c,))


def scale_broadcast(m, s) -> Tensor:
    """Recalibration: out[k, i, j] = s[k] * m[k, i, j]."""
    m, s = as_tensor(m), as_tensor(s)
    if m.ndim != 3 or s.ndim != 1 or s.shape[0] != m.shape[0]:
        raise ShapeError(f"scale_broadcast needs (C, H, W) and (C,), got {m.shape} and {s.shape}")
    data = m.data * s.data[:, None, None]

    def vjp(g):
        return g * s.data[:, None, None], np.einsum("chw,chw->c", g, m.data)

    return _make(data, (m, s), vjp)


def matmul(a, b) -> Tensor:
    """Matrix product; the right operand may be a vector."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2:
        raise ShapeError(f"matmul left operand must be rank 2, got {a.shape}")
    if b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
        data = a.data @ b.data
        vjp = lambda g: (g @ b.data.T, a.data.T @ g)
    elif b.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
        data = a.data @ b.data
        vjp = lambda g: (np.outer(g, b.data), a.data.T @ g)
    else:
        raise ShapeError(f"matmul right operand must be rank 1 or 2, got {b.shape}")
    return _make(data, (a, b), vjp)


def _dw_windows(padded: np.ndarray, kh: int, kw: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))


def _dw_correlate(m: np.ndarray, k: np.ndarray) -> np.ndarray:
    pad = (k.shape[1] - 1) // 2
    padded = np.pad(m, ((0, 0), (pad, pad), (pad, pad)))
    return np.einsum("chwpq,cpq->chw", _dw_windows(padded, k.shape[1], k.shape[2]), k)


def depthwise_conv7(m, k) -> Tensor:
    """Per-channel 7x7 cross-correlation, stride 1, zero padding 3 (same size)."""
    m, k = as_tensor(m), as_tensor(k)
    if m.ndim != 3:
        raise ShapeError(f"input must be (C, H, W), got {m.shape}")
    if k.shape != (m.shape[0], 7, 7):
        raise ShapeError(f"kernel must be ({m.shape[0]}, 7, 7), got {k.shape}")
    data = _dw_correlate(m.data, k.data)

    def vjp(g):
        padded = np.pad(m.data, ((0, 0), (3, 3), (3, 3)))
        dk = np.einsum("chw,chwpq->cpq", g, _dw_windows(padded, 7, 7))
        dm = _dw_correlate(g, k.data[:, ::-1, ::-1])
        return dm, dk

    return _make(data, (m, k), vjp)


def pointwise_conv(m, w, b) -> Tensor:
    """Per-pixel affine map across channels: (C, H, W) x (C', C) + (C',) -> (C', H, W)."""
    m, w, b = as_tensor(m), as_tensor(w), as_tensor(b)
    if m.ndim != 3 or w.ndim != 2 or w.shape[1] != m.shape[0]:
        raise ShapeError(f"pointwise_conv needs (C, H, W) and (C', C), got {m.shape} and {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias must be ({w.shape[0]},), got {b.shape}")
    data = np.einsum("dc,chw->dhw", w.data, m.data) + b.data[:, None, None]

    def vjp(g):
        dm = np.einsum("dc,dhw->chw", w.data, g)
        dw = np.einsum("dhw,chw->dc", g, m.data)
        return dm, dw, g.sum(axis=(1, 2))

    return _make(data, (m, w, b), vjp)


def gelu(x) -> Tensor:
    """Exact error-function GELU: 0.5 x (1 + erf(x / sqrt(2)))."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    data = x.data * cdf

    def vjp(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _make(data, (x,), vjp)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    data = expit(x.data)
    return _make(data, (x,), lambda g: (g * data * (1.0 - data),))


def layer_norm(m, gamma, beta, eps: float = 1e-6) -> Tensor:
    """Normalize over the channel dimension at every spatial location."""
    m, gamma, beta = as_tensor(m), as_tensor(gamma), as_tensor(beta)
    if m.ndim != 3:
        raise ShapeError(f"layer_norm input must be (C, H, W), got {m.shape}")
    c = m.shape[0]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma and beta must be ({c},), got {gamma.shape} and {beta.shape}")
    mean = m.data.mean(axis=0)
    centered = m.data - mean
    inv_std = 1.0 / np.sqrt(np.mean(centered * centered, axis=0) + eps)
    normed = centered * inv_std
    data = gamma.data[:, None, None] * normed + beta.data[:, None, None]

    def vjp(g):
        dgamma = np.einsum("chw,chw->c", g, normed)
        dbeta = g.sum(axis=(1, 2))
        dn = g * gamma.data[:, None, None]
        dm = inv_std * (dn - dn.mean(axis=0) - normed * (dn * normed).mean(axis=0))
        return dm, dgamma, dbeta

    return _make(data, (m, gamma, beta), vjp)


def global_avg_pool(m) -> Tensor:
    """Per-channel spatial mean: (C, H, W) -> (C,)."""
    m = as_tensor(m)
    if m.ndim != 3:
        raise ShapeError(f"global_avg_pool input must be (C, H, W), got {m.shape}")
    _, h, w = m.shape
    if h * w == 0:
        raise DegeneratePoolError("cannot pool over an empty spatial extent")
    data = m.data.mean(axis=(1, 2))
    scale = 1.0 / (h * w)

    def vjp(g):
        return (np.broadcast_to(g[:, None, None] * scale, m.shape).copy(),)

    return _make(data, (m,), vjp)


def softmax_cross_entropy(logits, target: int) -> Tensor:
    """Cross entropy of a length-K logit vector against a class id."""
    logits = as_tensor(logits)
    if logits.ndim != 1 or logits.shape[0] < 2:
        raise ShapeError(f"logits must be a vector of length >= 2, got {logits.shape}")
    k = logits.shape[0]
    target = int(target)
    if not 0 <= target < k:
        raise BoundsError(f"target {target} outside [0, {k})")
    shifted = logits.data - logits.data.max()
    lse = math.log(np.exp(shifted).sum()) + logits.data.max()
    data = np.asarray(lse - logits.data[target], dtype=logits.data.dtype)

    def vjp(g):
        p = np.exp(logits.data - lse)
        p[target] -= 1.0
        return (g * p,)

    return _make(data, (logits,), vjp)


def pixelwise_cross_entropy(logits, targets) -> Tensor:
    """Mean per-pixel cross entropy of (K, H, W) logits against (H, W) class ids."""
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    if logits.ndim != 3:
        raise ShapeError(f"logits must be (K, H, W), got {logits.shape}")
    k, h, w = logits.shape
    if targets.shape != (h, w):
        raise ShapeError(f"targets must be ({h}, {w}), got {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise BoundsError(f"targets outside [0, {k})")
    if h * w == 0:
        raise DegeneratePoolError("no pixels to score")
    m = logits.data.max(axis=0)
    lse = np.log(np.exp(logits.data - m).sum(axis=0)) + m
    picked = np.take_along_axis(logits.data, targets[None], axis=0)[0]
    data = np.asarray((lse - picked).mean(), dtype=logits.data.dtype)

    def vjp(g):
        p = np.exp(logits.data - lse)
        rows, cols = np.indices((h, w))
        p[targets, rows, cols] -= 1.0
        return (g * p / (h * w),)

    return _make(data, (logits,), vjp)


def space_to_depth2(m) -> Tensor:
    """Fold each 2x2 spatial block into channels: (C, H, W) -> (4C, H/2, W/2)."""
    m = as_tensor(m)
    if m.ndim != 3:
        raise ShapeError(f"input must be (C, H, W), got {m.shape}")
    c, h, w = m.shape
    if h % 2 or w % 2:
        raise ShapeError(f"spatial extent must be even, got {h}x{w}")
    data = np.concatenate(
        [m.data[:, 0::2, 0::2], m.data[:, 0::2, 1::2], m.data[:, 1::2, 0::2], m.data[:, 1::2, 1::2]],
        axis=0,
    )

    def vjp(g):
        dm = np.empty_like(m.data)
        dm[:, 0::2, 0::2] = g[0 * c : 1 * c]
        dm[:, 0::2, 1::2] = g[1 * c : 2 * c]
        dm[:, 1::2, 0::2] = g[2 * c : 3 * c]
        dm[:, 1::2, 1::2] = g[3 * c : 4 * c]
        return (dm,)

    return _make(data, (m,), vjp)


def upsample_nearest2(m) -> Tensor:
    """Nearest-neighbor x2 upsampling: (C, H, W) -> (C, 2H, 2W)."""
    m = as_tensor(m)
    if m.ndim != 3:
        raise ShapeError(f"input must be (C, H, W), got {m.shape}")
    c, h, w = m.shape
    data = np.repeat(np.repeat(m.data, 2, axis=1), 2, axis=2)

    def vjp(g):
        return (g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)),)

    return _make(data, (m,), vjp)


def weighted_sum(x, weights: np.ndarray) -> Tensor:
    """Scalar projection sum(x * weights); used to scalarize outputs for checking."""
    x = as_tensor(x)
    weights = np.asarray(weights, dtype=x.data.dtype)
    if weights.shape != x.shape:
        raise ShapeError(f"weights shaped {weights.shape} do not match {x.shape}")
    data = np.asarray((x.data * weights).sum(), dtype=x.data.dtype)
    return _make(data, (x,), lambda g: (g * weights,))
