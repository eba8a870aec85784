"""Minimal reverse-mode autodiff over float64 numpy arrays.

Graphs are built dynamically; every op output is checked for NaN/Inf so a
diverging model fails at the op that produced the bad value.  Creation order
doubles as a topological order, which keeps backward passes deterministic.
"""

from __future__ import annotations

import contextlib
import math
from typing import Optional, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


_scope_stack: list[str] = []


@contextlib.contextmanager
def scope(name: str):
    """Label ops created inside for error messages (e.g. a layer name)."""
    _scope_stack.append(name)
    try:
        yield
    finally:
        _scope_stack.pop()


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        where = ".".join(_scope_stack) or "<top>"
        raise NonFiniteError(f"non-finite values from op {op!r} in {where}")


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward", "_id")

    _counter = 0

    def __init__(self, data, _parents=(), _backward=None, _op: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        if _op is not None:
            _check_finite(self.data, _op)
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward = _backward
        Tensor._counter += 1
        self._id = Tensor._counter

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    # -- graph -------------------------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() is only defined for scalar outputs")
        seen = {self._id}
        stack = [self]
        nodes = [self]
        while stack:
            node = stack.pop()
            for p in node._parents:
                if p._id not in seen:
                    seen.add(p._id)
                    stack.append(p)
                    nodes.append(p)
        # parents always predate children, so creation ids sort topologically
        nodes.sort(key=lambda n: n._id, reverse=True)
        self.grad = np.ones_like(self.data)
        for node in nodes:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- arithmetic --------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return Tensor(out_data, (a, b), backward, _op="add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, (a, b), backward, _op="mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return Tensor(out_data, (a, b), backward, _op="div")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accumulate(a, _unbroadcast(ga, a.data.shape))
        _accumulate(b, _unbroadcast(gb, b.data.shape))

    return Tensor(out_data, (a, b), backward, _op="matmul")


def pow_scalar(a: Tensor, exponent: float) -> Tensor:
    a = as_tensor(a)
    out_data = a.data ** exponent

    def backward(g):
        _accumulate(a, g * exponent * a.data ** (exponent - 1.0))

    return Tensor(out_data, (a,), backward, _op="pow")


# -- elementwise nonlinearities ----------------------------------------------


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return Tensor(out_data, (a,), backward, _op="tanh")


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = np.empty_like(a.data)
    pos = a.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    out_data[~pos] = ez / (1.0 + ez)

    def backward(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return Tensor(out_data, (a,), backward, _op="sigmoid")


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        _accumulate(a, g * (a.data > 0.0))

    return Tensor(out_data, (a,), backward, _op="relu")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Smooth gelu (tanh form); kink-free, so finite differences stay accurate."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        _accumulate(a, g * d)

    return Tensor(out_data, (a,), backward, _op="gelu")


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out_data)

    return Tensor(out_data, (a,), backward, _op="exp")


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = np.log(a.data)

    def backward(g):
        _accumulate(a, g / a.data)

    return Tensor(out_data, (a,), backward, _op="log")


def sqrt(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        _accumulate(a, g * 0.5 / out_data)

    return Tensor(out_data, (a,), backward, _op="sqrt")


# -- reductions ---------------------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accumulate(a, np.broadcast_to(gg, a.data.shape).copy())

    return Tensor(out_data, (a,), backward, _op="sum")


def mean_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- shape ops ----------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        _accumulate(a, g.reshape(a.data.shape))

    return Tensor(out_data, (a,), backward, _op="reshape")


def transpose(a: Tensor, axes) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.transpose(axes)
    inverse = np.argsort(axes)

    def backward(g):
        _accumulate(a, g.transpose(inverse))

    return Tensor(out_data, (a,), backward, _op="transpose")


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, piece)

    return Tensor(out_data, tuple(tensors), backward, _op="concat")


def split(a: Tensor, sections: int, axis: int) -> list[Tensor]:
    a = as_tensor(a)
    pieces = np.split(a.data, sections, axis=axis)
    outs = []
    size = pieces[0].shape[axis]
    for k, piece in enumerate(pieces):
        def backward(g, k=k):
            full = np.zeros_like(a.data)
            sl = [slice(None)] * a.data.ndim
            sl[axis] = slice(k * size, (k + 1) * size)
            full[tuple(sl)] = g
            _accumulate(a, full)

        outs.append(Tensor(piece, (a,), backward, _op="split"))
    return outs


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            _accumulate(t, np.take(g, i, axis=axis))

    return Tensor(out_data, tuple(tensors), backward, _op="stack")


# -- indexing -----------------------------------------------------------------


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: output shape = ids.shape + (table_width,)."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"id out of range for table of {table.data.shape[0]} rows"
        )
    out_data = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
        _accumulate(table, gt)

    return Tensor(out_data, (table,), backward, _op="embedding")


def gather_last(a: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one element along the last axis: out[i...] = a[i..., idx[i...]]."""
    a = as_tensor(a)
    idx = np.asarray(idx)
    flat = a.data.reshape(-1, a.data.shape[-1])
    rows = np.arange(flat.shape[0])
    out_data = flat[rows, idx.reshape(-1)].reshape(idx.shape)

    def backward(g):
        gf = np.zeros_like(flat)
        gf[rows, idx.reshape(-1)] = g.reshape(-1)
        _accumulate(a, gf.reshape(a.data.shape))

    return Tensor(out_data, (a,), backward, _op="gather_last")


def select_time(a: Tensor, idx: np.ndarray) -> Tensor:
    """Per-batch time gather: a is (B, T, H), idx is (B,), out is (B, H)."""
    a = as_tensor(a)
    idx = np.asarray(idx)
    rows = np.arange(a.data.shape[0])
    out_data = a.data[rows, idx]

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[rows, idx] = g
        _accumulate(a, ga)

    return Tensor(out_data, (a,), backward, _op="select_time")


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where mask is True with a constant (usually -inf)."""
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.data.shape)
    out_data = np.where(mask, value, a.data)

    def backward(g):
        _accumulate(a, np.where(mask, 0.0, g))

    # -inf fills are legitimate pre-softmax, so skip the finite check here
    return Tensor(out_data, (a,), backward)


# -- softmax family -----------------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)  # rows that are fully masked
    e = np.exp(a.data - m)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(a, out_data * (g - dot))

    return Tensor(out_data, (a,), backward, _op="softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse

    def backward(g):
        sm = np.exp(out_data)
        _accumulate(a, g - sm * g.sum(axis=axis, keepdims=True))

    return Tensor(out_data, (a,), backward, _op="log_softmax")


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; draw order from ``rng`` is part of the training stream."""
    if p <= 0.0:
        return a
    if p >= 1.0:
        raise ValueError("dropout probability must be < 1")
    a = as_tensor(a)
    keep = (rng.random(a.data.shape) >= p) / (1.0 - p)

    def backward(g):
        _accumulate(a, g * keep)

    return Tensor(a.data * keep, (a,), backward, _op="dropout")
