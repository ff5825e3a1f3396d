"""Dense float64 tensors with a recorded computation graph.

Every primitive registers two derivative rules on the node it creates:

* ``vjp(g)`` maps an upstream gradient node to one gradient node per
  parent.  It is written with the same primitives, so a backward sweep
  run while recording produces a differentiable gradient graph.
* ``jvp(tangents)`` maps parent tangents (plain arrays) to the output
  tangent.  Pushing a tangent through a recorded gradient graph gives the
  directional derivative of the gradient, i.e. a Hessian-vector product.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np
from scipy.special import expit

from ganinv.errors import NumericError, ShapeError

_state = threading.local()


def is_recording() -> bool:
    return getattr(_state, "recording", True)


@contextlib.contextmanager
def no_grad():
    """Build plain values only; no parents, no derivative closures."""
    prev = is_recording()
    _state.recording = False
    try:
        yield
    finally:
        _state.recording = prev


class Tensor:
    """Immutable-by-convention array value, optionally a graph node."""

    __slots__ = ("data", "parents", "vjp", "jvp", "op", "requires_grad")
    __array_ufunc__ = None  # make ndarray <op> Tensor dispatch to Tensor

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = ()
        self.vjp = None
        self.jvp = None
        self.op = "leaf"
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, p):
        return power(self, p)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """A fresh leaf that never receives gradients (stop-gradient)."""
    return Tensor(x.data if isinstance(x, Tensor) else x)


def _node(value, parents, op, vjp, jvp) -> Tensor:
    value = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite value produced by '{op}'", node=op)
    out = Tensor(value)
    out.op = op
    if is_recording() and any(p.requires_grad for p in parents):
        out.parents = tuple(parents)
        out.vjp = vjp
        out.jvp = jvp
        out.requires_grad = True
    return out


# ---------------------------------------------------------------- shape ops


def sum_to(a, shape) -> Tensor:
    """Sum ``a`` down to ``shape`` (inverse of numpy broadcasting)."""
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    return _node(
        _sum_to(a.data, shape),
        (a,),
        "sum_to",
        lambda g: (broadcast_to(g, a.shape),),
        lambda t: _sum_to(t[0], shape),
    )


def _sum_to(x, shape):
    lead = x.ndim - len(shape)
    if lead:
        x = x.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and x.shape[i] != 1)
    if axes:
        x = x.sum(axis=axes, keepdims=True)
    return x


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    return _node(
        np.broadcast_to(a.data, shape),
        (a,),
        "broadcast_to",
        lambda g: (sum_to(g, a.shape),),
        lambda t: np.broadcast_to(t[0], shape),
    )


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(
        a.data.reshape(shape),
        (a,),
        "reshape",
        lambda g: (reshape(g, a.shape),),
        lambda t: t[0].reshape(shape),
    )


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.T, (a,), "transpose", lambda g: (transpose(g),), lambda t: t[0].T)


# ----------------------------------------------------------- arithmetic ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data + b.data,
        (a, b),
        "add",
        lambda g: (sum_to(g, a.shape), sum_to(g, b.shape)),
        lambda t: t[0] + t[1],
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data - b.data,
        (a, b),
        "sub",
        lambda g: (sum_to(g, a.shape), sum_to(neg(g), b.shape)),
        lambda t: t[0] - t[1],
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), "neg", lambda g: (neg(g),), lambda t: -t[0])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data * b.data,
        (a, b),
        "mul",
        lambda g: (sum_to(mul(g, b), a.shape), sum_to(mul(g, a), b.shape)),
        lambda t: t[0] * b.data + a.data * t[1],
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        ga = div(g, b)
        return sum_to(ga, a.shape), sum_to(neg(mul(ga, div(a, b))), b.shape)

    return _node(
        a.data / b.data,
        (a, b),
        "div",
        vjp,
        lambda t: (t[0] * b.data - a.data * t[1]) / (b.data * b.data),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul expects (n,k)@(k,m), got {a.shape} @ {b.shape}")
    return _node(
        a.data @ b.data,
        (a, b),
        "matmul",
        lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g)),
        lambda t: t[0] @ b.data + a.data @ t[1],
    )


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    kept = np.sum(a.data, axis=axis, keepdims=True).shape

    def vjp(g):
        return (broadcast_to(reshape(g, kept), a.shape),)

    return _node(
        np.sum(a.data, axis=axis, keepdims=keepdims),
        (a,),
        "sum",
        vjp,
        lambda t: np.sum(t[0], axis=axis, keepdims=keepdims),
    )


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def power(a, p) -> Tensor:
    """Elementwise ``a ** p`` for a constant exponent."""
    a = as_tensor(a)
    p = float(p)
    if p == 0.0:
        return Tensor(np.ones_like(a.data))

    def vjp(g):
        if p == 1.0:
            return (g,)
        return (mul(g, mul(power(a, p - 1.0), p)),)

    def jvp(t):
        if p == 1.0:
            return t[0]
        return t[0] * p * np.power(a.data, p - 1.0)

    return _node(np.power(a.data, p), (a,), f"pow{p:g}", vjp, jvp)


# ----------------------------------------------------------- elementwise ops


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        value = np.exp(a.data)
    out = _node(value, (a,), "exp", lambda g: (mul(g, out),), lambda t: t[0] * out.data)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.log(a.data)
    return _node(value, (a,), "log", lambda g: (div(g, a),), lambda t: t[0] / a.data)


def abs(a) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    sign = Tensor(np.sign(a.data))
    return _node(
        np.abs(a.data), (a,), "abs", lambda g: (mul(g, sign),), lambda t: t[0] * sign.data
    )


def relu(a) -> Tensor:
    # second derivative is taken as zero: the mask is a constant
    a = as_tensor(a)
    mask = Tensor((a.data > 0).astype(np.float64))
    return _node(
        a.data * mask.data, (a,), "relu", lambda g: (mul(g, mask),), lambda t: t[0] * mask.data
    )


def sigmoid(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (mul(g, mul(out, sub(1.0, out))),)

    def jvp(t):
        s = out.data
        return t[0] * s * (1.0 - s)

    out = _node(expit(a.data), (a,), "sigmoid", vjp, jvp)
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (mul(g, sub(1.0, mul(out, out))),)

    def jvp(t):
        y = out.data
        return t[0] * (1.0 - y * y)

    out = _node(np.tanh(a.data), (a,), "tanh", vjp, jvp)
    return out


def clip(a, lo, hi) -> Tensor:
    """Clamp to ``[lo, hi]``; gradient passes only where not clamped."""
    a = as_tensor(a)
    mask = Tensor(((a.data >= lo) & (a.data <= hi)).astype(np.float64))
    return _node(
        np.clip(a.data, lo, hi),
        (a,),
        "clip",
        lambda g: (mul(g, mask),),
        lambda t: t[0] * mask.data,
    )


# ------------------------------------------------------------------- losses


def log_softmax(logits) -> Tensor:
    """Row-wise log-softmax over the last axis."""
    logits = as_tensor(logits)
    shift = constant(np.max(logits.data, axis=-1, keepdims=True))
    s = sub(logits, shift)
    return sub(s, log(sum(exp(s), axis=-1, keepdims=True)))


def softmax(logits) -> Tensor:
    return exp(log_softmax(logits))


def softmax_cross_entropy(logits, onehot) -> Tensor:
    """Mean over rows of ``-sum(onehot * log_softmax(logits))``."""
    logits = as_tensor(logits)
    onehot = as_tensor(onehot)
    if logits.shape != onehot.shape:
        raise ShapeError(f"logits {logits.shape} vs targets {onehot.shape}")
    rows = logits.shape[0] if logits.ndim == 2 else 1
    return mul(sum(mul(onehot, log_softmax(logits))), -1.0 / rows)
