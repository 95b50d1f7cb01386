"""A small reverse-mode differentiation engine over float64 numpy arrays.

Operations are recorded on the active :class:`Tape` (a context manager) when
at least one operand requires a gradient. :func:`backward` replays the tape
in reverse and accumulates ``.grad`` on every tensor that requires one.
Without an active tape the ops simply compute values.
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None


class Tape:
    """Ordered record of backward closures; operands always precede consumers."""

    def __init__(self):
        self.nodes: list[Callable[[], None]] = []

    def __len__(self):
        return len(self.nodes)

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False


_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def _active(*operands: Tensor) -> Tape | None:
    stack = _stack()
    if stack and any(t.requires_grad for t in operands):
        return stack[-1]
    return None


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True).reshape(t.shape)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _result(data, tape: Tape | None) -> Tensor:
    return Tensor(data, requires_grad=tape is not None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(tape: Tape, loss: Tensor):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every recorded tensor."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        node()


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product, or a batched product over a shared leading axis."""
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    tape = _active(a, b)
    out = _result(a.data @ b.data, tape)
    if tape is not None:
        def node():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))
        tape.nodes.append(node)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` as a single node."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {w.shape}")
    ops = (x, w) if b is None else (x, w, b)
    tape = _active(*ops)
    value = x.data @ w.data
    if b is not None:
        value = value + b.data
    out = _result(value, tape)
    if tape is not None:
        def node():
            g = out.grad
            if g is None:
                return
            g2 = g.reshape(-1, g.shape[-1])
            if x.requires_grad:
                _accum(x, g @ w.data.T)
            if w.requires_grad:
                _accum(w, x.data.reshape(-1, x.shape[-1]).T @ g2)
            if b is not None and b.requires_grad:
                _accum(b, g2.sum(axis=0))
        tape.nodes.append(node)
    return out


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    tape = _active(x)
    out = _result(x.data.reshape(shape), tape)
    if tape is not None:
        def node():
            if out.grad is not None:
                _accum(x, out.grad.reshape(x.shape))
        tape.nodes.append(node)
    return out


# ---------------------------------------------------------------- elementwise

def _check_broadcast(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)
    tape = _active(a, b)
    out = _result(a.data + b.data, tape)
    if tape is not None:
        def node():
            g = out.grad
            if g is None:
                return
            _accum(a, _unbroadcast(g, a.shape))
            _accum(b, _unbroadcast(g, b.shape))
        tape.nodes.append(node)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a, b)
    tape = _active(a, b)
    out = _result(a.data - b.data, tape)
    if tape is not None:
        def node():
            g = out.grad
            if g is None:
                return
            _accum(a, _unbroadcast(g, a.shape))
            _accum(b, _unbroadcast(-g, b.shape))
        tape.nodes.append(node)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a, b)
    tape = _active(a, b)
    out = _result(a.data * b.data, tape)
    if tape is not None:
        def node():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, _unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g * a.data, b.shape))
        tape.nodes.append(node)
    return out


def blend(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """``mask * a + (1 - mask) * b`` for a constant 0/1 mask (broadcastable)."""
    _check_broadcast("blend", a, b)
    m = np.asarray(mask, dtype=np.float64)
    tape = _active(a, b)
    out = _result(m * a.data + (1.0 - m) * b.data, tape)
    if tape is not None:
        def node():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, _unbroadcast(g * m, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g * (1.0 - m), b.shape))
        tape.nodes.append(node)
    return out


def sigmoid(x: Tensor) -> Tensor:
    tape = _active(x)
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    out = _result(y, tape)
    if tape is not None:
        def node():
            if out.grad is not None:
                _accum(x, out.grad * y * (1.0 - y))
        tape.nodes.append(node)
    return out


def tanh(x: Tensor) -> Tensor:
    tape = _active(x)
    y = np.tanh(x.data)
    out = _result(y, tape)
    if tape is not None:
        def node():
            if out.grad is not None:
                _accum(x, out.grad * (1.0 - y * y))
        tape.nodes.append(node)
    return out


def pointwise(x: Tensor, fn: Callable, dfn: Callable) -> Tensor:
    """Apply a scalar function with a caller-supplied derivative elementwise."""
    tape = _active(x)
    out = _result(fn(x.data), tape)
    if tape is not None:
        def node():
            if out.grad is not None:
                _accum(x, out.grad * dfn(x.data))
        tape.nodes.append(node)
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat of an empty list")
    try:
        value = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from exc
    tape = _active(*tensors)
    out = _result(value, tape)
    if tape is not None:
        bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

        def node():
            if out.grad is None:
                return
            for t, g in zip(tensors, np.split(out.grad, bounds, axis=axis)):
                _accum(t, g)
        tape.nodes.append(node)
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("stack of an empty list")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: tensors have differing shapes {sorted(shapes)}")
    tape = _active(*tensors)
    out = _result(np.stack([t.data for t in tensors], axis=axis), tape)
    if tape is not None:
        def node():
            if out.grad is None:
                return
            for i, t in enumerate(tensors):
                _accum(t, np.take(out.grad, i, axis=axis))
        tape.nodes.append(node)
    return out


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    tape = _active(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _result(y, tape)
    if tape is not None:
        def node():
            g = out.grad
            if g is not None:
                _accum(x, y * (g - (g * y).sum(axis=-1, keepdims=True)))
        tape.nodes.append(node)
    return out


def sum_all(x: Tensor) -> Tensor:
    tape = _active(x)
    out = _result(np.sum(x.data), tape)
    if tape is not None:
        def node():
            if out.grad is not None:
                _accum(x, np.broadcast_to(out.grad, x.shape))
        tape.nodes.append(node)
    return out


def weighted_sum(x: Tensor, coef: np.ndarray) -> Tensor:
    """Scalar ``sum(coef * x)`` with constant coefficients."""
    c = np.asarray(coef, dtype=np.float64)
    if c.shape != x.shape:
        raise ShapeError(f"weighted_sum: coefficients {c.shape} vs tensor {x.shape}")
    tape = _active(x)
    out = _result(np.dot(c.ravel(), x.data.ravel()), tape)
    if tape is not None:
        def node():
            if out.grad is not None:
                _accum(x, out.grad * c)
        tape.nodes.append(node)
    return out


# ---------------------------------------------------------------- lookups and noise

def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding ids out of range for table with {table.shape[0]} rows")
    tape = _active(table)
    out = _result(table.data[ids], tape)
    if tape is not None:
        def node():
            if out.grad is None:
                return
            g = np.zeros_like(table.data)
            np.add.at(g, ids.ravel(), out.grad.reshape(-1, table.shape[1]))
            _accum(table, g)
        tape.nodes.append(node)
    return out


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p); identity when not training."""
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("dropout at train time needs a random generator")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    tape = _active(x)
    out = _result(x.data * keep, tape)
    if tape is not None:
        def node():
            if out.grad is not None:
                _accum(x, out.grad * keep)
        tape.nodes.append(node)
    return out


# ---------------------------------------------------------------- fused model ops

def lstm_cell(gates: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """LSTM state update from pre-activation gates laid out as [i | f | g | o]."""
    hidden = c_prev.shape[-1]
    if gates.shape[-1] != 4 * hidden or gates.shape[:-1] != c_prev.shape[:-1]:
        raise ShapeError(f"lstm_cell: gates {gates.shape} incompatible with cell {c_prev.shape}")
    z = gates.data
    ifo = 0.5 * (np.tanh(0.5 * np.concatenate(
        [z[..., :2 * hidden], z[..., 3 * hidden:]], axis=-1)) + 1.0)
    i, f, o = ifo[..., :hidden], ifo[..., hidden:2 * hidden], ifo[..., 2 * hidden:]
    g = np.tanh(z[..., 2 * hidden:3 * hidden])
    c = f * c_prev.data + i * g
    tc = np.tanh(c)
    tape = _active(gates, c_prev)
    h_out = _result(o * tc, tape)
    c_out = _result(c, tape)
    if tape is not None:
        def node():
            dh, dc = h_out.grad, c_out.grad
            if dh is None and dc is None:
                return
            dc_total = np.zeros_like(c) if dc is None else dc.copy()
            do = np.zeros_like(c)
            if dh is not None:
                do = dh * tc
                dc_total += dh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc_total * g * i * (1.0 - i),
                dc_total * c_prev.data * f * (1.0 - f),
                dc_total * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=-1)
            _accum(gates, dz)
            if c_prev.requires_grad:
                _accum(c_prev, dc_total * f)
        tape.nodes.append(node)
    return h_out, c_out


def log_softmax_nll(logits: Tensor, targets) -> tuple[Tensor, np.ndarray]:
    """Per-row negative log-likelihood of ``targets`` and the matching probability.

    Returns the loss tensor of shape ``[N]`` and ``p_t = exp(-loss)`` as a plain
    array.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(
            f"log_softmax_nll: logits {logits.shape} vs targets {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ShapeError("log_softmax_nll: target id out of range")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(targets.size)
    nll = lse - z[rows, targets]
    p = np.exp(-nll)
    tape = _active(logits)
    out = _result(nll, tape)
    if tape is not None:
        def node():
            g = out.grad
            if g is None:
                return
            soft = np.exp(z - lse[:, None])
            soft[rows, targets] -= 1.0
            _accum(logits, soft * g[:, None])
        tape.nodes.append(node)
    return out, p
