"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every differentiable quantity in the package (the denoiser, the training
losses and the soft temporal-logic evaluator) is built from :class:`Value`
nodes.  The graph is dynamic: each forward pass records its own tape and
``backward`` walks it once in reverse topological order.

A root may only be back-propagated once; a second call raises
``RuntimeError``.  Build a fresh graph instead.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Value",
    "as_value",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "relu",
    "softplus",
    "clamp",
    "maximum",
    "vsum",
    "mean",
    "softmax",
    "logsumexp",
    "window_logsumexp",
    "concat",
    "conv1d",
    "grad_check",
    "ShapeError",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


def _unbroadcast(grad, shape):
    # sum out axes that broadcasting added or stretched
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _broadcast_shape(a, b, opname):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from None


class Value:
    """A node in the computation graph: array data plus accumulated gradient."""

    __slots__ = ("data", "grad", "op", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, _parents=(), op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.op = op
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = tuple(p for p in _parents if p.requires_grad)
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Value(shape={self.data.shape}, op={self.op or 'leaf'})"

    def _acc(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, seed=None):
        """Back-propagate from this node. Leaves accumulate into ``.grad``."""
        if self._consumed:
            raise RuntimeError("backward already ran on this graph; rebuild it before differentiating again")
        self._consumed = True
        if not self.requires_grad:
            return
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
                if id(p) not in seen:
                    stack.append((p, False))
        g0 = np.ones_like(self.data) if seed is None else np.asarray(seed, dtype=np.float64)
        self._acc(g0)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return vsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    @property
    def T(self):
        return transpose(self)


def as_value(x):
    return x if isinstance(x, Value) else Value(x)


def _node(data, parents, op, backward):
    out = Value(data, _parents=parents, op=op)
    if out.requires_grad:
        out._backward = backward
    return out


def add(a, b):
    a, b = as_value(a), as_value(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        a._acc(_unbroadcast(g, a.shape))
        b._acc(_unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), "add", bw)


def sub(a, b):
    a, b = as_value(a), as_value(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        a._acc(_unbroadcast(g, a.shape))
        b._acc(_unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), "sub", bw)


def mul(a, b):
    a, b = as_value(a), as_value(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        a._acc(_unbroadcast(g * b.data, a.shape))
        b._acc(_unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), "mul", bw)


def div(a, b):
    a, b = as_value(a), as_value(b)
    _broadcast_shape(a, b, "div")

    def bw(g):
        a._acc(_unbroadcast(g / b.data, a.shape))
        b._acc(_unbroadcast(-g * a.data / b.data**2, b.shape))

    return _node(a.data / b.data, (a, b), "div", bw)


def neg(a):
    a = as_value(a)
    return _node(-a.data, (a,), "neg", lambda g: a._acc(-g))


def matmul(a, b):
    a, b = as_value(a), as_value(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")

    def bw(g):
        a._acc(g @ b.data.T)
        b._acc(a.data.T @ g)

    return _node(a.data @ b.data, (a, b), "matmul", bw)


def exp(a):
    a = as_value(a)
    out = np.exp(a.data)
    return _node(out, (a,), "exp", lambda g: a._acc(g * out))


def log(a):
    a = as_value(a)
    if np.any(a.data <= 0):
        raise ValueError(f"log: non-positive input (min {a.data.min():.3g}); clamp before taking logs")
    return _node(np.log(a.data), (a,), "log", lambda g: a._acc(g / a.data))


def tanh(a):
    a = as_value(a)
    out = np.tanh(a.data)
    return _node(out, (a,), "tanh", lambda g: a._acc(g * (1.0 - out**2)))


def sigmoid(a):
    a = as_value(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a,), "sigmoid", lambda g: a._acc(g * out * (1.0 - out)))


def relu(a):
    a = as_value(a)
    return _node(np.maximum(a.data, 0.0), (a,), "relu", lambda g: a._acc(g * (a.data > 0)))


def softplus(a):
    """log(1 + exp(a)), evaluated without overflow."""
    a = as_value(a)
    out = np.logaddexp(0.0, a.data)
    sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a,), "softplus", lambda g: a._acc(g * sig))


def clamp(a, lo=None, hi=None):
    """Clip into [lo, hi]. Gradient passes inside the range and on its edges."""
    a = as_value(a)
    lo_ = -np.inf if lo is None else lo
    hi_ = np.inf if hi is None else hi
    active = (a.data >= lo_) & (a.data <= hi_)
    return _node(np.clip(a.data, lo_, hi_), (a,), "clamp", lambda g: a._acc(g * active))


def maximum(a, c):
    """Elementwise max against a constant; ties route the gradient to ``a``."""
    a = as_value(a)
    keep = a.data >= c
    return _node(np.maximum(a.data, c), (a,), "maximum", lambda g: a._acc(g * keep))


def vsum(a, axis=None):
    a = as_value(a)
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        a._acc(np.broadcast_to(g, a.shape).copy())

    return _node(out, (a,), "sum", bw)


def mean(a, axis=None):
    a = as_value(a)
    n = a.data.size if axis is None else a.shape[axis]
    return vsum(a, axis) * (1.0 / n)


def reshape(a, shape):
    a = as_value(a)
    return _node(a.data.reshape(shape), (a,), "reshape", lambda g: a._acc(g.reshape(a.shape)))


def transpose(a):
    a = as_value(a)
    return _node(a.data.T, (a,), "transpose", lambda g: a._acc(g.T))


def getitem(a, idx):
    a = as_value(a)

    basic = all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in (idx if isinstance(idx, tuple) else (idx,)))

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        a._acc(full)

    return _node(a.data[idx], (a,), "slice", bw)


def concat(values, axis=-1):
    values = [as_value(v) for v in values]
    datas = [v.data for v in values]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[d.shape for d in datas]} disagree off axis {axis}") from None
    bounds = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def bw(g):
        for v, piece in zip(values, np.split(g, bounds, axis=axis)):
            v._acc(piece)

    return _node(out, tuple(values), "concat", bw)


def logsumexp(a, axis=-1):
    a = as_value(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.log(np.sum(np.exp(a.data - m), axis=axis, keepdims=True)) + m
    out = np.squeeze(s, axis=axis)

    def bw(g):
        a._acc(np.expand_dims(g, axis) * np.exp(a.data - s))

    return _node(out, (a,), "logsumexp", bw)


def softmax(a, axis=-1):
    a = as_value(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        a._acc(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _node(out, (a,), "softmax", bw)


def window_logsumexp(a, mask, empty=-np.inf):
    """Row-wise log-sum-exp of a 1-D value over boolean windows.

    ``out[t] = log(sum_j mask[t, j] * exp(a[j]))``; rows of ``mask`` with no
    true entry produce the constant ``empty`` and pass no gradient.
    """
    a = as_value(a)
    mask = np.asarray(mask, dtype=bool)
    if a.ndim != 1 or mask.shape != (a.shape[0], a.shape[0]):
        raise ShapeError(f"window_logsumexp: value {a.shape} with mask {mask.shape}")
    filled = mask.any(axis=1)
    z = np.where(mask, a.data[None, :], -np.inf)
    m = np.where(filled, z.max(axis=1), 0.0)
    w = np.exp(z - m[:, None])
    tot = w.sum(axis=1)
    out = np.where(filled, m + np.log(np.where(filled, tot, 1.0)), empty)

    def bw(g):
        gw = np.where(filled, g, 0.0) / np.where(filled, tot, 1.0)
        a._acc(gw @ w)

    return _node(out, (a,), "window_logsumexp", bw)


def conv1d(x, w, b=None, dilation=1):
    """'Same'-padded dilated temporal convolution.

    x: (T, Cin), w: (K, Cin, Cout) with odd K, b: (Cout,).  Output frame t
    sees input frames t + (k - K//2) * dilation, zero outside [0, T).
    """
    x, w = as_value(x), as_value(w)
    if x.ndim != 2 or w.ndim != 3 or w.shape[1] != x.shape[1] or w.shape[0] % 2 == 0:
        raise ShapeError(f"conv1d: input {x.shape} with kernel {w.shape}")
    T, cin = x.shape
    K, _, cout = w.shape
    half = K // 2
    pad = half * dilation
    xp = np.zeros((T + 2 * pad, cin))
    xp[pad : pad + T] = x.data
    cols = np.concatenate([xp[k * dilation : k * dilation + T] for k in range(K)], axis=1)
    wmat = w.data.reshape(K * cin, cout)
    out = cols @ wmat
    parents = (x, w)
    if b is not None:
        b = as_value(b)
        out = out + b.data
        parents = (x, w, b)

    def bw(g):
        w._acc((cols.T @ g).reshape(w.shape))
        if b is not None:
            b._acc(g.sum(axis=0))
        if x.requires_grad:
            gcols = g @ wmat.T
            gxp = np.zeros_like(xp)
            for k in range(K):
                gxp[k * dilation : k * dilation + T] += gcols[:, k * cin : (k + 1) * cin]
            x._acc(gxp[pad : pad + T])

    return _node(out, parents, f"conv1d(d={dilation})", bw)


def grad_check(fn, point, step=1e-6):
    """Largest relative disagreement between backprop and central differences.

    ``fn`` maps a flat float64 vector (wrapped as a leaf Value) to a scalar
    Value.  Relative error is |analytic - numeric| / max(1, |numeric|).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(point, dtype=np.float64).ravel()
    leaf = Value(x.copy(), requires_grad=True)
    out = fn(leaf)
    out.backward()
    analytic = np.zeros_like(x) if leaf.grad is None else leaf.grad
    numeric = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp[i] += step
        xm = x.copy()
        xm[i] -= step
        numeric[i] = (fn(Value(xp)).item() - fn(Value(xm)).item()) / (2 * step)
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        raise FloatingPointError("grad_check: non-finite gradient")
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
