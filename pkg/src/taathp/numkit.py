"""Dense float64 arrays with define-by-run reverse-mode differentiation.

A :class:`Value` wraps a numpy array, remembers the operation that produced
it and can push gradients back to its inputs.  The kernel only covers what
the TAA-THP forward pass needs: matrix products, elementwise maths with
numpy broadcasting, causal row softmax, layer norm, inverted dropout and the
fused conv/ReLU/max-pool block of the feed-forward sublayer.

Graphs are built per call and are confined to one thread.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "NumericsError",
    "NumericsWarning",
    "Value",
    "as_value",
    "backward",
    "concat",
    "conv1d_relu_maxpool",
    "conv_output_length",
    "dropout",
    "exp",
    "layer_norm",
    "log",
    "log_clamped",
    "masked_softmax_rows",
    "matmul",
    "relu",
    "sigmoid",
    "softmax_rows",
    "softplus",
    "tanh",
]

LOG_FLOOR = -745.0


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericsError(FloatingPointError):
    """A NaN or infinity appeared in a forward value."""


class NumericsWarning(RuntimeWarning):
    pass


class Value:
    """Node of a dynamically built computation graph.

    ``data`` is a float64 ndarray; ``grad`` has the same shape and starts at
    zero.  Only nodes that (transitively) depend on a ``requires_grad`` leaf
    record parents and a backward rule.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")
    __array_ufunc__ = None  # make ndarray <op> Value dispatch to Value

    def __init__(self, data, requires_grad: bool = False, *, op: str = "leaf",
                 parents: tuple = (), backward_fn: Callable | None = None):
        arr = np.asarray(data, dtype=np.float64)
        # one reduction catches inf/nan; the full scan only runs on overflowing sums
        if not math.isfinite(arr.sum()) and not np.isfinite(arr).all():
            raise NumericsError(f"non-finite values produced by '{op}'")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.op = op
        self._parents = parents
        self._backward = backward_fn

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Value":
        return transpose(self)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        return f"Value(shape={self.shape}, op={self.op!r})"

    def __len__(self) -> int:
        return len(self.data)

    # arithmetic -----------------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims: bool = False) -> "Value":
        return vsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Value":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        backward(self)


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _make(data, parents: Sequence[Value], op: str, rule: Callable) -> Value:
    """Create an op output; ``rule(g)`` returns one gradient per parent."""
    for p in parents:
        if p.requires_grad:
            break
    else:
        return Value(data, op=op)
    return Value(data, requires_grad=True, op=op, parents=tuple(parents),
                 backward_fn=rule)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss: Value) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node.

    Gradients are added, never overwritten: calling this twice without
    zeroing doubles every ``.grad``.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order: list[Value] = []
    seen: set[int] = set()
    stack: list[tuple[Value, bool]] = [(loss, False)]
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

    fresh: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = fresh.pop(id(node), None)
        if g is None:
            continue
        node.grad = node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in fresh:
                fresh[key] = fresh[key] + pg
            else:
                fresh[key] = pg


# elementwise -----------------------------------------------------------------

def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), "add",
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), "sub",
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), "mul",
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _make(out, (a, b), "div",
                 lambda g: (_unbroadcast(g / bd, ad.shape),
                            _unbroadcast(-g * out / bd, bd.shape)))


def exp(x: Value) -> Value:
    x = as_value(x)
    out = np.exp(x.data)
    return _make(out, (x,), "exp", lambda g: (g * out,))


def log(x: Value) -> Value:
    x = as_value(x)
    xd = x.data
    if (xd <= 0).any():
        raise NumericsError("log of a non-positive value")
    return _make(np.log(xd), (x,), "log", lambda g: (g / xd,))


def log_clamped(x: Value, floor: float = LOG_FLOOR) -> Value:
    """``max(log x, floor)``; emits :class:`NumericsWarning` when clamping."""
    x = as_value(x)
    xd = x.data
    with np.errstate(divide="ignore"):
        raw = np.log(np.maximum(xd, 0.0))
    clamped = raw < floor
    if clamped.any():
        warnings.warn(f"log clamped at {floor} for {int(clamped.sum())} entries",
                      NumericsWarning, stacklevel=2)
    out = np.where(clamped, floor, raw)
    safe = np.where(clamped, 1.0, xd)
    return _make(out, (x,), "log_clamped",
                 lambda g: (np.where(clamped, 0.0, g / safe),))


def relu(x: Value) -> Value:
    x = as_value(x)
    pos = x.data > 0
    return _make(np.where(pos, x.data, 0.0), (x,), "relu", lambda g: (g * pos,))


def sigmoid(x: Value) -> Value:
    x = as_value(x)
    out = _sigmoid(x.data)
    return _make(out, (x,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def tanh(x: Value) -> Value:
    x = as_value(x)
    out = np.tanh(x.data)
    return _make(out, (x,), "tanh", lambda g: (g * (1.0 - out * out),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(x, beta: float = 1.0) -> Value:
    """``(1/beta) * log(1 + exp(beta * x))`` in overflow-safe form."""
    if not beta > 0:
        raise ValueError(f"softplus beta must be positive, got {beta}")
    x = as_value(x)
    xd = x.data
    out = np.maximum(xd, 0.0) + np.log1p(np.exp(-beta * np.abs(xd))) / beta
    slope = _sigmoid(beta * xd)
    return _make(out, (x,), "softplus", lambda g: (g * slope,))


# shape ops -------------------------------------------------------------------

def transpose(x: Value) -> Value:
    x = as_value(x)
    return _make(x.data.T, (x,), "transpose", lambda g: (g.T,))


def reshape(x: Value, shape) -> Value:
    x = as_value(x)
    old = x.shape
    return _make(x.data.reshape(shape), (x,), "reshape", lambda g: (g.reshape(old),))


def getitem(x: Value, key) -> Value:
    x = as_value(x)
    shape = x.shape

    def rule(g):
        out = np.zeros(shape)
        np.add.at(out, key, g)
        return (out,)

    return _make(x.data[key], (x,), "getitem", rule)


def vsum(x: Value, axis=None, keepdims: bool = False) -> Value:
    x = as_value(x)
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(out, (x,), "sum", rule)


def concat(values: Iterable, axis: int = 1) -> Value:
    vals = [as_value(v) for v in values]
    if not vals:
        raise DimensionError("concat of an empty list")
    sizes = [v.shape[axis] for v in vals]
    cuts = np.cumsum(sizes)[:-1]
    try:
        out = np.concatenate([v.data for v in vals], axis=axis)
    except ValueError as err:
        raise DimensionError(f"cannot concatenate shapes {[v.shape for v in vals]}") from err
    return _make(out, vals, "concat", lambda g: tuple(np.split(g, cuts, axis=axis)))


# linear algebra --------------------------------------------------------------

def matmul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    # einsum rather than BLAS in the forward pass: each output entry then
    # depends only on its own row and column, whatever the matrix sizes,
    # which keeps causal prefixes bit-identical as sequences grow.
    return _make(np.einsum("ij,jk->ik", ad, bd), (a, b), "matmul", lambda g: (g @ bd.T, ad.T @ g))


# attention / normalization ---------------------------------------------------

def causal_mask(n: int) -> np.ndarray:
    """Boolean mask permitting (i, j) iff j <= i."""
    return np.tril(np.ones((n, n), dtype=bool))


def masked_softmax_rows(m: Value, mask: np.ndarray | None = None) -> Value:
    """Row softmax restricted to permitted entries; others are exactly 0."""
    m = as_value(m)
    if m.ndim != 2:
        raise DimensionError(f"masked_softmax_rows expects a matrix, got {m.shape}")
    if mask is None:
        mask = causal_mask(m.shape[0]) if m.shape[0] == m.shape[1] else None
        if mask is None:
            raise DimensionError(f"default causal mask needs a square matrix, got {m.shape}")
    if not mask.any(axis=1).all():
        raise ValueError("masked_softmax_rows: a row has no permitted entries")
    md = np.where(mask, m.data, -np.inf)
    shifted = md - md.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    # sequential sum, so trailing masked zeros cannot regroup the additions
    out = e / np.cumsum(e, axis=1)[:, -1:]
    return _make(out, (m,), "masked_softmax",
                 lambda g: (out * (g - (g * out).sum(axis=1, keepdims=True)),))


def softmax_rows(m: Value) -> Value:
    m = as_value(m)
    shifted = m.data - m.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    return _make(out, (m,), "softmax",
                 lambda g: (out * (g - (g * out).sum(axis=-1, keepdims=True)),))


def layer_norm(x: Value, gain: Value, bias: Value, eps: float = 1e-5) -> Value:
    """Normalize each row to zero mean / unit variance, then ``* gain + bias``."""
    x, gain, bias = as_value(x), as_value(gain), as_value(bias)
    if x.shape[-1] < 2:
        raise DimensionError(f"layer_norm needs at least 2 features, got {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def rule(g):
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return (dx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape))

    return _make(out, (x, gain, bias), "layer_norm", rule)


def dropout(x: Value, rate: float, rng: np.random.Generator | None, train: bool) -> Value:
    """Inverted dropout; the identity when not training or ``rate == 0``."""
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)


# convolution block -----------------------------------------------------------

def conv_output_length(length: int, kernel: int = 3, stride: int = 2, pool: int = 2) -> tuple[int, int]:
    """(length after conv, length after max-pool) for padding 0."""
    l1 = (length - kernel) // stride + 1
    return l1, l1 // pool


def conv1d_relu_maxpool(x: Value, kernels: Value, stride: int = 2, pool: int = 2) -> Value:
    """1-input-channel conv (no padding) -> ReLU -> max-pool, per row of ``x``.

    ``x`` is ``(n, L)`` (n independent signals), ``kernels`` is
    ``(channels, k)``.  Returns ``(n, channels, L2)``.
    """
    x, kernels = as_value(x), as_value(kernels)
    if x.ndim != 2:
        raise DimensionError(f"conv1d expects (n, L) input, got {x.shape}")
    n, length = x.shape
    ch, k = kernels.shape
    if length < k:
        raise DimensionError(f"conv1d input length {length} shorter than kernel {k}")
    l1, l2 = conv_output_length(length, k, stride, pool)
    patches = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=1)[:, ::stride, :][:, :l1, :]
    conv = np.einsum("npk,ck->ncp", patches, kernels.data)
    act = np.maximum(conv, 0.0)
    if l2 == 0:
        return _make(np.zeros((n, ch, 0)), (x, kernels), "conv1d_relu_maxpool",
                     lambda g: (np.zeros(x.shape), np.zeros(kernels.shape)))
    windows = act[:, :, : l2 * pool].reshape(n, ch, l2, pool)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def rule(g):
        gw = np.zeros((n, ch, l2, pool))
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gconv = np.zeros((n, ch, l1))
        gconv[:, :, : l2 * pool] = gw.reshape(n, ch, l2 * pool)
        gconv *= conv > 0
        gk = np.einsum("ncp,npk->ck", gconv, patches)
        gpatch = np.einsum("ncp,ck->npk", gconv, kernels.data)
        gx = np.zeros((n, length))
        span = stride * (l1 - 1) + 1
        for j in range(k):
            gx[:, j: j + span: stride] += gpatch[:, :, j]
        return gx, gk

    return _make(out, (x, kernels), "conv1d_relu_maxpool", rule)
