"""Dense float64 tensors with reverse-mode differentiation.

A tensor records the op that produced it and its parents; ``backward`` walks
that graph once in reverse topological order. Rank is capped at 4.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

from ..errors import ShapeMismatch

MAX_RANK = 4
_state = threading.local()


def is_grad_enabled():
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording on the current thread."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        a = np.asarray(data, dtype=np.float64)
        if a.ndim > MAX_RANK:
            raise ShapeMismatch(f"rank {a.ndim} exceeds {MAX_RANK}")
        self.data = a
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._prev = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.data.shape)
        else:
            self.grad += g

    def backward(self, grad=None, retain_graph=False):
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward without a seed needs a scalar")
            grad = np.ones_like(self.data)
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
            for p in node._prev:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.broadcast_to(grad, self.data.shape))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if not retain_graph and node._prev:
                node._backward = None
                node._prev = ()

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return swap_last(self)


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward
    return out


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from exc


# elementwise binary ---------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(unbroadcast(g, b.shape))
    return _result(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(unbroadcast(-g, b.shape))
    return _result(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(unbroadcast(g * a.data, b.shape))
    return _result(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    out = a.data / b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(unbroadcast(-g * out / b.data, b.shape))
    return _result(out, (a, b), bw)


def neg(a):
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: a._accumulate(-g))


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    return _result(a.data ** p, (a,), lambda g: a._accumulate(g * p * a.data ** (p - 1)))


# unary ------------------------------------------------------------------------

def _unary(a, value, dvalue):
    a = as_tensor(a)
    return _result(value, (a,), lambda g: a._accumulate(g * dvalue()))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _unary(a, out, lambda: out)


def log(a):
    a = as_tensor(a)
    return _unary(a, np.log(a.data), lambda: 1.0 / a.data)


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _unary(a, out, lambda: 0.5 / out)


def sin(a):
    a = as_tensor(a)
    return _unary(a, np.sin(a.data), lambda: np.cos(a.data))


def cos(a):
    a = as_tensor(a)
    return _unary(a, np.cos(a.data), lambda: -np.sin(a.data))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _unary(a, out, lambda: 1.0 - out * out)


def sigmoid(a):
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _unary(a, out, lambda: out * (1.0 - out))


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def relu(a):
    a = as_tensor(a)
    return _unary(a, np.maximum(a.data, 0.0), lambda: (a.data > 0).astype(np.float64))


def absolute(a):
    a = as_tensor(a)
    return _unary(a, np.abs(a.data), lambda: np.sign(a.data))


def square(a):
    a = as_tensor(a)
    return _unary(a, a.data * a.data, lambda: 2.0 * a.data)


def clip_min(a, lo):
    """max(a, lo); the gradient is passed only where a > lo."""
    a = as_tensor(a)
    return _unary(a, np.maximum(a.data, lo), lambda: (a.data > lo).astype(np.float64))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    """GELU with the tanh approximation."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    th = np.tanh(x * (_GELU_C + _GELU_C * 0.044715 * x2))
    out = 0.5 * x * (1.0 + th)

    def d():
        du = _GELU_C + (3 * _GELU_C * 0.044715) * x2
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
    return _unary(a, out, d)


# linear algebra and shape -----------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul needs rank >= 2 operands")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc

    def bw(g):
        if a.requires_grad:
            a._accumulate(unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            if b.ndim == 2:
                k = a.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
            b._accumulate(gb)
    return _result(out, (a, b), bw)


def transpose(a, axes=None):
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = np.argsort(axes)
    return _result(np.transpose(a.data, axes), (a,), lambda g: a._accumulate(np.transpose(g, inv)))


def swap_last(a):
    a = as_tensor(a)
    return _result(np.swapaxes(a.data, -1, -2), (a,),
                   lambda g: a._accumulate(np.swapaxes(g, -1, -2)))


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc
    if out.ndim > MAX_RANK:
        raise ShapeMismatch(f"rank {out.ndim} exceeds {MAX_RANK}")
    return _result(out, (a,), lambda g: a._accumulate(g.reshape(a.shape)))


def _is_basic(idx):
    idx = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in idx)


def getitem(a, idx):
    """Indexing and slicing; fancy indices scatter-add in backward."""
    a = as_tensor(a)
    out = a.data[idx]
    basic = _is_basic(idx)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        a._accumulate(full)
    return _result(np.array(out, dtype=np.float64), (a,), bw)


def concat(tensors, axis=-1):
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])
    return _result(out, ts, bw)


def stack(tensors, axis=0):
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from exc
    if out.ndim > MAX_RANK:
        raise ShapeMismatch(f"rank {out.ndim} exceeds {MAX_RANK}")
    ax = axis % out.ndim

    def bw(g):
        for i, t in enumerate(ts):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=ax))
    return _result(out, ts, bw)


# reductions ------------------------------------------------------------------

def _expand(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    return _result(out, (a,), lambda g: a._accumulate(_expand(g, a.shape, axis, keepdims)))


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size / max(out.size, 1)
    return _result(out, (a,), lambda g: a._accumulate(_expand(g, a.shape, axis, keepdims) / n))


def softmax(a):
    """Softmax over the last axis."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        a._accumulate(s * (g - (g * s).sum(axis=-1, keepdims=True)))
    return _result(s, (a,), bw)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Fused layer normalization over the last axis."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeMismatch("layer_norm affine params must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xh = xc * inv
    out = xh * gamma.data + beta.data

    def bw(g):
        if x.requires_grad:
            gx = g * gamma.data
            gx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                        - xh * (gx * xh).mean(axis=-1, keepdims=True))
            x._accumulate(gx)
        lead = tuple(range(g.ndim - 1))
        if gamma.requires_grad:
            gamma._accumulate((g * xh).sum(axis=lead))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=lead))
    return _result(out, (x, gamma, beta), bw)


# losses ------------------------------------------------------------------------

def _row_reduce(rows, weight):
    """Mean of per-row values, or weighted mean when ``weight`` is given."""
    if weight is None:
        return rows.mean(), np.full(rows.shape, 1.0 / max(rows.size, 1))
    w = np.broadcast_to(np.asarray(weight, dtype=np.float64), rows.shape)
    total = w.sum()
    if total <= 0:
        return 0.0, np.zeros(rows.shape)
    return (w * rows).sum() / total, w / total


def l1(a, b=None, weight=None):
    """Sum of |a - b| over the last axis, averaged over the remaining rows."""
    a = as_tensor(a)
    b = Tensor(np.zeros(a.shape)) if b is None else as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"l1 {a.shape} vs {b.shape}")
    d = a.data - b.data
    val, w = _row_reduce(np.abs(d).sum(axis=-1), weight)

    def bw(g):
        gd = g * w[..., None] * np.sign(d)
        if a.requires_grad:
            a._accumulate(gd)
        if b.requires_grad:
            b._accumulate(-gd)
    return _result(np.asarray(val), (a, b), bw)


def l2(a, b=None, weight=None):
    """Squared Euclidean norm of a - b over the last axis, averaged over rows."""
    a = as_tensor(a)
    b = Tensor(np.zeros(a.shape)) if b is None else as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"l2 {a.shape} vs {b.shape}")
    d = a.data - b.data
    val, w = _row_reduce((d * d).sum(axis=-1), weight)

    def bw(g):
        gd = 2.0 * g * w[..., None] * d
        if a.requires_grad:
            a._accumulate(gd)
        if b.requires_grad:
            b._accumulate(-gd)
    return _result(np.asarray(val), (a, b), bw)


def bce_with_logits(logits, targets, weight=None):
    """Mean sigmoid cross-entropy; ``targets`` may be soft labels in [0, 1]."""
    x = as_tensor(logits)
    y = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if y.shape != x.shape:
        raise ShapeMismatch(f"bce {x.shape} vs {y.shape}")
    per = np.maximum(x.data, 0.0) - x.data * y + np.log1p(np.exp(-np.abs(x.data)))
    val, w = _row_reduce(per, weight)
    p = _sigmoid(x.data)
    return _result(np.asarray(val), (x,), lambda g: x._accumulate(g * w * (p - y)))
