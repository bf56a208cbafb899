"""Reverse-mode automatic differentiation over numpy arrays with an explicit tape.

Every differentiable op takes an optional ``tape``; passing ``None`` runs the
op in inference mode without recording. Gradients are accumulated into
``Tensor.grad`` by ``backward``. The tape owns a gradient mode: in GUIDED mode
ReLU backward passes gradient only where both the forward input and the
upstream gradient are positive (all other ops keep their exact rules).
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from ..errors import DimensionError, NumericError, StateError


class GradMode(Enum):
    STANDARD = "standard"
    GUIDED = "guided"


class Tensor:
    """N-dimensional real array with an optional gradient.

    Storage is float32 by default; float64 is allowed so that test oracles can
    run shadow evaluations at higher precision.
    """

    __slots__ = ("data", "requires_grad", "grad", "_needs")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        # True when a gradient must flow into or through this tensor.
        self._needs = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def check_finite(self, context=""):
        if not np.all(np.isfinite(self.data)):
            raise NumericError(f"non-finite values encountered {context}".strip())
        return self

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of operations for one forward/backward episode.

    Single-threaded by design; create a fresh tape per episode.
    """

    def __init__(self, mode=GradMode.STANDARD):
        self.mode = mode
        self.nodes = []

    def record(self, inputs, output, backward):
        output._needs = any(t._needs for t in inputs)
        self.nodes.append(_Node(tuple(inputs), output, backward))


def backward(tape, output):
    """Populate gradients of every tensor reachable from ``output``.

    ``output`` must be a scalar produced by ops recorded on ``tape``. Each
    recorded node is visited exactly once, in reverse topological order.
    """
    if not isinstance(tape, Tape) or not tape.nodes:
        raise StateError("backward called before any op was recorded on the tape")
    if output.size != 1:
        raise DimensionError(f"backward requires a scalar output, got shape {output.shape}")
    output.grad = np.ones_like(output.data)
    for node in reversed(tape.nodes):
        g = node.output.grad
        if g is None:
            continue
        grads = node.backward(g, tape.mode)
        for t, gi in zip(node.inputs, grads):
            if gi is None or not t._needs:
                continue
            if t.grad is None:
                t.grad = np.asarray(gi, dtype=t.data.dtype)
            else:
                t.grad = t.grad + gi


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` to undo numpy broadcasting."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gd, sd) in enumerate(zip(g.shape, shape)):
        if sd == 1 and gd != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _make(inputs, data, bw, tape):
    out = Tensor(data)
    if tape is not None:
        tape.record(inputs, out, bw)
    return out


def add(a, b, tape=None):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g, mode):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make((a, b), a.data + b.data, bw, tape)


def sub(a, b, tape=None):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g, mode):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make((a, b), a.data - b.data, bw, tape)


def mul(a, b, tape=None):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g, mode):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make((a, b), a.data * b.data, bw, tape)


def div(a, b, tape=None):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g, mode):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make((a, b), a.data / b.data, bw, tape)


def neg(a, tape=None):
    def bw(g, mode):
        return (-g,)

    return _make((a,), -a.data, bw, tape)


def square(a, tape=None):
    def bw(g, mode):
        return (2.0 * a.data * g,)

    return _make((a,), a.data * a.data, bw, tape)


def exp(a, tape=None):
    y = np.exp(a.data)

    def bw(g, mode):
        return (g * y,)

    return _make((a,), y, bw, tape)


def sigmoid(a, tape=None):
    y = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g, mode):
        return (g * y * (1.0 - y),)

    return _make((a,), y, bw, tape)


def relu(a, tape=None):
    y = np.maximum(a.data, 0)

    def bw(g, mode):
        keep = a.data > 0
        if mode is GradMode.GUIDED:
            keep &= g > 0
        return (g * keep,)

    return _make((a,), y, bw, tape)


def tsum(a, axis=None, keepdims=False, tape=None):
    """Sum with 64-bit accumulation, cast back to the input dtype."""
    y = np.sum(a.data, axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def bw(g, mode):
        gg = g
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            for ax in sorted(ax % a.data.ndim for ax in axes):
                gg = np.expand_dims(gg, axis=ax)
        return (np.broadcast_to(gg, a.shape).astype(a.data.dtype),)

    return _make((a,), y, bw, tape)


def tmean(a, axis=None, tape=None):
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = 1
        for ax in axes:
            n *= a.shape[ax]
    return mul(tsum(a, axis=axis, tape=tape), 1.0 / n, tape=tape)


def reshape(a, shape, tape=None):
    def bw(g, mode):
        return (g.reshape(a.shape),)

    return _make((a,), a.data.reshape(shape), bw, tape)


def matmul(a, b, tape=None):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def bw(g, mode):
        return g @ b.data.T, a.data.T @ g

    return _make((a, b), a.data @ b.data, bw, tape)


def narrow(a, axis, start, length, tape=None):
    """Contiguous slice along one axis."""
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bw(g, mode):
        full = np.zeros(a.shape, dtype=a.data.dtype)
        full[idx] = g
        return (full,)

    return _make((a,), a.data[idx].copy(), bw, tape)


def gather_rows(a, idx, tape=None):
    """out[i] = a[i, idx[i]] for a 2-D tensor."""
    if a.data.ndim != 2:
        raise DimensionError(f"gather_rows expects a 2-D tensor, got shape {a.shape}")
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.shape[0])

    def bw(g, mode):
        full = np.zeros(a.shape, dtype=a.data.dtype)
        np.add.at(full, (rows, idx), g)
        return (full,)

    return _make((a,), a.data[rows, idx].copy(), bw, tape)


def huber(a, delta=1.0, tape=None):
    """Elementwise Huber penalty of a residual tensor."""
    absd = np.abs(a.data)
    quad = absd <= delta
    y = np.where(quad, 0.5 * a.data * a.data, delta * (absd - 0.5 * delta))

    def bw(g, mode):
        return (g * np.clip(a.data, -delta, delta),)

    return _make((a,), y.astype(a.data.dtype), bw, tape)
