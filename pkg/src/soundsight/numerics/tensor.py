"""Reverse-mode autodiff over a dynamically recorded op graph.

Double precision throughout. Every op validates shapes up front (errors name
the op and both shapes) and rejects non-finite outputs unless finite checking
is disabled. Inference paths should run under `no_grad()` so no graph is kept.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Iterable, Sequence

import numpy as np

from soundsight import _kernels

DTYPE = np.float64


class ShapeMismatch(ValueError):
    """Operands cannot be combined under the op's shape rule."""


class NonFiniteError(FloatingPointError):
    """A forward or backward pass produced NaN or +-inf."""


class _GradMode(threading.local):
    # thread-local so benchmark workers can hold no_grad() independently
    enabled = True


_grad_mode = _GradMode()
_check_finite = True


@contextlib.contextmanager
def no_grad():
    prev = _grad_mode.enabled
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = prev


def set_check_finite(flag: bool) -> bool:
    """Toggle non-finite rejection; returns the previous setting."""
    global _check_finite
    prev = _check_finite
    _check_finite = bool(flag)
    return prev


def _guard(data: np.ndarray, op: str) -> np.ndarray:
    if _check_finite and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op}: non-finite values in result")
    return data


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        _accum(self, np.asarray(grad, dtype=DTYPE))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # operator sugar; all dispatch to module-level ops
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)


def astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if _check_finite and not np.all(np.isfinite(g)):
        raise NonFiniteError("backward: non-finite gradient")
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _node(data: np.ndarray, op: str, parents: Sequence[Tensor], backward) -> Tensor:
    _guard(data, op)
    out = Tensor(data)
    if _grad_mode.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward(out)
    return out


def _broadcast_check(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    _broadcast_check(a, b, "add")

    def bwd(out):
        def run():
            _accum(a, _unbroadcast(out.grad, a.shape))
            _accum(b, _unbroadcast(out.grad, b.shape))

        return run

    return _node(a.data + b.data, "add", (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    _broadcast_check(a, b, "sub")

    def bwd(out):
        def run():
            _accum(a, _unbroadcast(out.grad, a.shape))
            _accum(b, _unbroadcast(-out.grad, b.shape))

        return run

    return _node(a.data - b.data, "sub", (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    _broadcast_check(a, b, "mul")

    def bwd(out):
        def run():
            _accum(a, _unbroadcast(out.grad * b.data, a.shape))
            _accum(b, _unbroadcast(out.grad * a.data, b.shape))

        return run

    return _node(a.data * b.data, "mul", (a, b), bwd)


def matmul(a, b) -> Tensor:
    """numpy @ semantics: 2-D or batched stacks with broadcastable batch dims."""
    a, b = astensor(a), astensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} vs {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatch(f"matmul: {a.shape} vs {b.shape}") from None

    def bwd(out):
        def run():
            ga = out.grad @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ out.grad
            _accum(a, _unbroadcast(ga, a.shape))
            _accum(b, _unbroadcast(gb, b.shape))

        return run

    return _node(a.data @ b.data, "matmul", (a, b), bwd)


def gelu(x) -> Tensor:
    x = astensor(x)

    def bwd(out):
        def run():
            _accum(x, _kernels.gelu_bwd(x.data, out.grad))

        return run

    return _node(_kernels.gelu_fwd(x.data), "gelu", (x,), bwd)


def exp(x) -> Tensor:
    x = astensor(x)

    def bwd(out):
        def run():
            _accum(x, out.grad * out.data)

        return run

    return _node(np.exp(x.data), "exp", (x,), bwd)


def softmax(x, axis: int = -1) -> Tensor:
    x = astensor(x)
    ax = axis if axis >= 0 else x.ndim + axis
    if not 0 <= ax < x.ndim:
        raise ShapeMismatch(f"softmax: axis {axis} out of range for {x.shape}")
    moved = np.moveaxis(x.data, ax, -1)
    y = np.moveaxis(_kernels.softmax_last(moved), -1, ax)

    def bwd(out):
        def run():
            inner = np.sum(out.grad * out.data, axis=ax, keepdims=True)
            _accum(x, out.data * (out.grad - inner))

        return run

    return _node(y, "softmax", (x,), bwd)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis; gain/bias are 1-D of that axis length."""
    x, gain, bias = astensor(x), astensor(gain), astensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch(f"layer_norm: params {gain.shape}/{bias.shape} vs feature dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def bwd(out):
        def run():
            gxh = out.grad * gain.data
            m1 = gxh.mean(axis=-1, keepdims=True)
            m2 = (gxh * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * (gxh - m1 - xhat * m2))
            red = tuple(range(out.grad.ndim - 1))
            _accum(gain, (out.grad * xhat).sum(axis=red))
            _accum(bias, out.grad.sum(axis=red))

        return run

    return _node(xhat * gain.data + bias.data, "layer_norm", (x, gain, bias), bwd)


def embedding(table, ids) -> Tensor:
    """Row lookup: table (V, D), integer ids of any shape -> ids.shape + (D,)."""
    table = astensor(table)
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise ShapeMismatch(f"embedding: table must be 2-D, got {table.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError("embedding: ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(
            f"embedding: id out of range [0, {table.shape[0]}) "
            f"(min {ids.min()}, max {ids.max()})"
        )

    def bwd(out):
        def run():
            g = np.zeros_like(table.data)
            np.add.at(g, ids.reshape(-1), out.grad.reshape(-1, table.shape[1]))
            _accum(table, g)

        return run

    return _node(table.data[ids], "embedding", (table,), bwd)


def mean(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = astensor(x)
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ShapeMismatch(f"mean: axis {axis} out of range for {x.shape}")
    n = x.data.size if axis is None else x.shape[axis]

    def bwd(out):
        def run():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g / n, x.shape).copy())

        return run

    return _node(x.data.mean(axis=axis, keepdims=keepdims), "mean", (x,), bwd)


def sum_(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = astensor(x)
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ShapeMismatch(f"sum: axis {axis} out of range for {x.shape}")

    def bwd(out):
        def run():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.shape).copy())

        return run

    return _node(x.data.sum(axis=axis, keepdims=keepdims), "sum", (x,), bwd)


def l2_normalize(x, axis: int = -1, eps: float = 1e-12) -> Tensor:
    x = astensor(x)
    s = np.sum(x.data * x.data, axis=axis, keepdims=True) + eps
    inv = s ** -0.5

    def bwd(out):
        def run():
            dot = np.sum(out.grad * x.data, axis=axis, keepdims=True)
            _accum(x, out.grad * inv - x.data * dot * (inv**3))

        return run

    return _node(x.data * inv, "l2_normalize", (x,), bwd)


def cross_entropy(logits, targets, label_smoothing: float = 0.0, reduction: str = "mean") -> Tensor:
    """CE over the last axis against integer targets, optional label smoothing.

    Smoothed target distribution: eps/V + (1-eps)*onehot. Reductions: mean,
    sum, none (per-row losses).
    """
    logits = astensor(logits)
    t = np.asarray(targets)
    if logits.ndim < 1 or t.shape != logits.shape[:-1]:
        raise ShapeMismatch(f"cross_entropy: logits {logits.shape} vs targets {t.shape}")
    if not np.issubdtype(t.dtype, np.integer):
        raise ValueError("cross_entropy: targets must be integers")
    v = logits.shape[-1]
    if t.size and (t.min() < 0 or t.max() >= v):
        raise ValueError(f"cross_entropy: target out of range [0, {v})")
    if not 0.0 <= label_smoothing < 1.0:
        raise ValueError(f"cross_entropy: bad label_smoothing {label_smoothing}")
    if reduction not in ("mean", "sum", "none"):
        raise ValueError(f"cross_entropy: bad reduction {reduction!r}")

    x = logits.data
    m = x.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(x, t[..., None], axis=-1)
    rows = lse[..., 0] - (1.0 - label_smoothing) * picked[..., 0] \
        - label_smoothing * x.mean(axis=-1)
    n = max(1, rows.size)

    def bwd(out):
        def run():
            p = np.exp(x - lse)
            q = np.full_like(p, label_smoothing / v)
            np.put_along_axis(
                q, t[..., None],
                np.take_along_axis(q, t[..., None], axis=-1) + (1.0 - label_smoothing),
                axis=-1,
            )
            g = p - q
            if reduction == "mean":
                g *= out.grad / n
            elif reduction == "sum":
                g *= out.grad
            else:
                g *= out.grad[..., None]
            _accum(logits, g)

        return run

    if reduction == "mean":
        val = rows.mean() if rows.size else np.float64(0.0)
    elif reduction == "sum":
        val = rows.sum()
    else:
        val = rows
    return _node(np.asarray(val), "cross_entropy", (logits,), bwd)


def reshape(x, shape) -> Tensor:
    x = astensor(x)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {x.shape} -> {shape}") from None

    def bwd(out):
        def run():
            _accum(x, out.grad.reshape(x.shape))

        return run

    return _node(data, "reshape", (x,), bwd)


def transpose(x, axes) -> Tensor:
    x = astensor(x)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatch(f"transpose: axes {axes} invalid for {x.shape}")
    inv = np.argsort(axes)

    def bwd(out):
        def run():
            _accum(x, out.grad.transpose(inv))

        return run

    return _node(x.data.transpose(axes), "transpose", (x,), bwd)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [astensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat: empty input")
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeMismatch(f"concat: {[t.shape for t in ts]} along axis {axis}") from None
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(out):
        def run():
            for t, piece in zip(ts, np.split(out.grad, splits, axis=axis)):
                _accum(t, piece)

        return run

    return _node(data, "concat", tuple(ts), bwd)


def take(x, indices, axis: int = 0) -> Tensor:
    """Integer-array gather along axis 0 (repeats allowed)."""
    if axis != 0:
        raise ValueError("take: only axis 0 supported")
    x = astensor(x)
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("take: indices must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ValueError(f"take: index out of range [0, {x.shape[0]})")

    def bwd(out):
        def run():
            g = np.zeros_like(x.data)
            np.add.at(g, idx, out.grad)
            _accum(x, g)

        return run

    return _node(x.data[idx], "take", (x,), bwd)


def narrow(x, key) -> Tensor:
    """Basic slicing (slices / ints / None collapse handled by numpy)."""
    x = astensor(x)
    data = x.data[key]

    def bwd(out):
        def run():
            g = np.zeros_like(x.data)
            g[key] += out.grad
            _accum(x, g)

        return run

    return _node(data, "narrow", (x,), bwd)
