"""Minimal dense float32 tensor with tape-based reverse-mode autodiff.

Only the operations the translation models and losses need are registered.
Forward values are float32; reductions accumulate in float64 before casting
back. The tape is a DAG of TapeNode records; backward() walks it in reverse
topological order exactly once.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes are invalid for an op."""


class DomainError(ValueError):
    """Raised when an op is evaluated outside its mathematical domain."""


class ContractError(RuntimeError):
    """Raised when an autodiff/optimizer precondition is violated."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@dataclass
class TapeNode:
    kind: str
    inputs: tuple
    ctx: dict


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float32)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node: Optional[TapeNode] = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A view of the same data with no tape history."""
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.grad = None
        t.requires_grad = False
        t.node = None
        t.name = None
        return t

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar used throughout the models/losses
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, 1.0 / float(other))
        return div(self, other)

    def __neg__(self):
        return scalar_mul(self, -1.0)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float32))


# ---------------------------------------------------------------------------
# op registry

# kind -> backward fn (ctx, grad_out) -> list of grads aligned with node.inputs
_BACKWARD: dict[str, Callable] = {}


def register_op(kind: str):
    def deco(fn):
        _BACKWARD[kind] = fn
        return fn

    return deco


def registered_ops() -> list[str]:
    """Names of every differentiable op on the tape (for gradient checks)."""
    return sorted(_BACKWARD)


def _apply(kind: str, inputs: Sequence[Tensor], out_data: np.ndarray, ctx: dict) -> Tensor:
    out = Tensor(out_data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        ctx["needs"] = tuple(t.requires_grad for t in inputs)
        out.node = TapeNode(kind, tuple(inputs), ctx)
    return out


def backward(root: Tensor):
    """Populate .grad for every reachable requires_grad tensor.

    Gradients accumulate additively across fan-out. Root must be scalar.
    """
    if not root.requires_grad:
        raise ContractError("backward: root does not require grad")
    if root.size != 1:
        raise ContractError(f"backward: root must be scalar, got shape {root.shape}")

    # reverse topological order via iterative DFS
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, processed = stack.pop()
        if processed:
            topo.append(t)
            continue
        if id(t) in visited:
            continue
        visited.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for inp in t.node.inputs:
                if inp.requires_grad and id(inp) not in visited:
                    stack.append((inp, False))

    if root.grad is None:
        root.grad = np.ones_like(root.data)
    for t in reversed(topo):
        if t.node is None:
            continue
        g = t.grad
        grads = _BACKWARD[t.node.kind](t.node.ctx, g)
        for inp, gi in zip(t.node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            gi = gi.astype(np.float32, copy=False)
            if inp.grad is None:
                inp.grad = gi.copy() if gi.base is not None or gi is g else gi
            else:
                inp.grad = inp.grad + gi


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise binary ops (with numpy broadcasting)


def _binary(kind: str, a: Tensor, b: Tensor, fn):
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise DimensionError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    out = _binary("add", a, b, np.add)
    return _apply("add", (a, b), out, {"sa": a.shape, "sb": b.shape})


@register_op("add")
def _add_bw(ctx, g):
    return [_unbroadcast(g, ctx["sa"]), _unbroadcast(g, ctx["sb"])]


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _binary("sub", a, b, np.subtract)
    return _apply("sub", (a, b), out, {"sa": a.shape, "sb": b.shape})


@register_op("sub")
def _sub_bw(ctx, g):
    return [_unbroadcast(g, ctx["sa"]), _unbroadcast(-g, ctx["sb"])]


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _binary("mul", a, b, np.multiply)
    return _apply("mul", (a, b), out, {"a": a.data, "b": b.data})


@register_op("mul")
def _mul_bw(ctx, g):
    return [_unbroadcast(g * ctx["b"], ctx["a"].shape), _unbroadcast(g * ctx["a"], ctx["b"].shape)]


def div(a: Tensor, b: Tensor) -> Tensor:
    out = _binary("div", a, b, np.divide)
    return _apply("div", (a, b), out, {"a": a.data, "b": b.data})


@register_op("div")
def _div_bw(ctx, g):
    a, b = ctx["a"], ctx["b"]
    return [_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)]


def scalar_mul(a: Tensor, c: float) -> Tensor:
    return _apply("scalar_mul", (a,), a.data * np.float32(c), {"c": float(c)})


@register_op("scalar_mul")
def _smul_bw(ctx, g):
    return [g * np.float32(ctx["c"])]


def scalar_add(a: Tensor, c: float) -> Tensor:
    return _apply("scalar_add", (a,), a.data + np.float32(c), {})


@register_op("scalar_add")
def _sadd_bw(ctx, g):
    return [g]


# ---------------------------------------------------------------------------
# elementwise unary ops


def relu(a: Tensor) -> Tensor:
    return _apply("relu", (a,), np.maximum(a.data, 0), {"x": a.data})


@register_op("relu")
def _relu_bw(ctx, g):
    return [g * (ctx["x"] > 0)]


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.data
    out = np.where(x > 0, x, np.float32(slope) * x)
    return _apply("leaky_relu", (a,), out, {"x": x, "slope": float(slope)})


@register_op("leaky_relu")
def _lrelu_bw(ctx, g):
    return [g * np.where(ctx["x"] > 0, np.float32(1.0), np.float32(ctx["slope"]))]


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _apply("tanh", (a,), out, {"y": out})


@register_op("tanh")
def _tanh_bw(ctx, g):
    y = ctx["y"]
    return [g * (1.0 - y * y)]


def sigmoid(a: Tensor) -> Tensor:
    # stable in both tails; float32 underflows to 0/1 beyond |x| ~ 90
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _apply("sigmoid", (a,), out, {"y": out})


@register_op("sigmoid")
def _sigmoid_bw(ctx, g):
    y = ctx["y"]
    return [g * y * (1.0 - y)]


def absval(a: Tensor) -> Tensor:
    return _apply("abs", (a,), np.abs(a.data), {"x": a.data})


@register_op("abs")
def _abs_bw(ctx, g):
    return [g * np.sign(ctx["x"])]


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log: non-positive input; clamp first")
    return _apply("log", (a,), np.log(a.data), {"x": a.data})


@register_op("log")
def _log_bw(ctx, g):
    return [g / ctx["x"]]


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise DomainError("sqrt: negative input")
    out = np.sqrt(a.data)
    return _apply("sqrt", (a,), out, {"y": out})


@register_op("sqrt")
def _sqrt_bw(ctx, g):
    return [g * (0.5 / ctx["y"])]


def clamp(a: Tensor, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    out = np.clip(a.data, lo, hi)
    return _apply("clamp", (a,), out, {"x": a.data, "lo": lo, "hi": hi})


@register_op("clamp")
def _clamp_bw(ctx, g):
    x, lo, hi = ctx["x"], ctx["lo"], ctx["hi"]
    mask = np.ones_like(x, dtype=bool)
    if lo is not None:
        mask &= x >= lo
    if hi is not None:
        mask &= x <= hi
    return [g * mask]


# ---------------------------------------------------------------------------
# reductions (float64 accumulators)


def _norm_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(a % ndim for a in axes)


def tsum(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    ax = _norm_axes(axes, a.data.ndim)
    out = a.data.sum(axis=ax, keepdims=keepdims, dtype=np.float64).astype(np.float32)
    return _apply("sum", (a,), out, {"shape": a.shape, "axes": ax, "keepdims": keepdims})


@register_op("sum")
def _sum_bw(ctx, g):
    shape, ax, keep = ctx["shape"], ctx["axes"], ctx["keepdims"]
    if not keep:
        g = np.expand_dims(g, ax)
    return [np.broadcast_to(g, shape)]


def tmean(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    ax = _norm_axes(axes, a.data.ndim)
    out = a.data.mean(axis=ax, keepdims=keepdims, dtype=np.float64).astype(np.float32)
    n = 1
    for i in ax:
        n *= a.shape[i]
    return _apply("mean", (a,), out, {"shape": a.shape, "axes": ax, "keepdims": keepdims, "n": n})


@register_op("mean")
def _mean_bw(ctx, g):
    shape, ax, keep, n = ctx["shape"], ctx["axes"], ctx["keepdims"], ctx["n"]
    if not keep:
        g = np.expand_dims(g, ax)
    return [np.broadcast_to(g / np.float32(n), shape)]


# ---------------------------------------------------------------------------
# shape ops


def reshape(a: Tensor, shape) -> Tensor:
    return _apply("reshape", (a,), a.data.reshape(shape), {"shape": a.shape})


@register_op("reshape")
def _reshape_bw(ctx, g):
    return [g.reshape(ctx["shape"])]


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    return _apply("concat", tuple(tensors), out, {"axis": axis, "sizes": sizes})


@register_op("concat")
def _concat_bw(ctx, g):
    axis, sizes = ctx["axis"], ctx["sizes"]
    splits = np.cumsum(sizes)[:-1]
    return list(np.split(g, splits, axis=axis))


def tslice(a: Tensor, starts: Sequence[int], sizes: Sequence[int]) -> Tensor:
    if len(starts) != a.data.ndim or len(sizes) != a.data.ndim:
        raise DimensionError(
            f"slice: starts/sizes rank {len(starts)}/{len(sizes)} vs tensor rank {a.data.ndim}"
        )
    idx = tuple(slice(s, s + n) for s, n in zip(starts, sizes))
    return _apply("slice", (a,), a.data[idx], {"shape": a.shape, "idx": idx})


@register_op("slice")
def _slice_bw(ctx, g):
    buf = np.zeros(ctx["shape"], dtype=np.float32)
    buf[ctx["idx"]] = g
    return [buf]


def pad_reflect(a: Tensor, pad: int) -> Tensor:
    """Reflect-pad the trailing two (spatial) axes by `pad` on each side."""
    if a.data.ndim < 2:
        raise DimensionError("pad_reflect: needs at least 2 dims")
    width = [(0, 0)] * (a.data.ndim - 2) + [(pad, pad), (pad, pad)]
    out = np.pad(a.data, width, mode="reflect")
    return _apply("pad_reflect", (a,), out, {"shape": a.shape, "pad": pad})


def _fold_reflect_axis(g: np.ndarray, p: int, axis: int) -> np.ndarray:
    """Sum padded-axis gradient back onto the source axis (reflect mode)."""
    n = g.shape[axis] - 2 * p
    sl = lambda a, b, step=1: tuple(
        slice(a, b, step) if i == axis % g.ndim else slice(None) for i in range(g.ndim)
    )
    out = g[sl(p, p + n)].copy()
    if p > 0:
        out[sl(1, p + 1)] += np.flip(g[sl(0, p)], axis=axis)
        out[sl(n - 1 - p, n - 1)] += np.flip(g[sl(p + n, p + n + p)], axis=axis)
    return out


@register_op("pad_reflect")
def _pad_reflect_bw(ctx, g):
    p = ctx["pad"]
    return [_fold_reflect_axis(_fold_reflect_axis(g, p, -1), p, -2)]
