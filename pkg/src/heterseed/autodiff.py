"""Dense tensors with taped reverse-mode differentiation.

Everything learnable in the model is a :class:`Tensor`; forward ops executed
under an active :class:`Tape` record a vector-Jacobian closure, and
:func:`backward` replays the tape once in reverse to accumulate adjoints.
Sparsity never enters this module: graph aggregation is expressed through
``row_gather`` / ``row_scatter_add`` with plain integer index arrays.

Training runs in float32 by default; gradient checks build parameters in
float64 (ops preserve the dtype of their inputs).
"""
from __future__ import annotations

import threading

import numpy as np


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DisconnectedLossError(RuntimeError):
    """backward() was asked for a loss the tape never produced."""


class Tensor:
    """A dense value plus an optional accumulated gradient."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), requires_grad=False, dtype=dtype)


class _Record:
    __slots__ = ("out_id", "inputs", "vjp", "name")

    def __init__(self, out_id, inputs, vjp, name):
        self.out_id = out_id
        self.inputs = inputs
        self.vjp = vjp
        self.name = name


_tls = threading.local()


def _tape_stack():
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed ops; independent tapes never share state."""

    def __init__(self):
        self._records = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self._records)


def _emit(out, inputs, vjp, name):
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape._records.append(_Record(id(out), tuple(inputs), vjp, name))
    return out


def backward(loss, tape):
    """Accumulate d(loss)/d(leaf) into .grad of every requires_grad leaf.

    Visits each taped op exactly once in reverse execution order. Repeated
    calls without zero_grad() add gradients on top of the previous ones.
    """
    if loss.data.size != 1:
        raise ShapeMismatchError(f"loss must be scalar, got shape {loss.data.shape}")
    produced = {rec.out_id for rec in tape._records}
    if id(loss) not in produced:
        raise DisconnectedLossError("loss tensor was not produced on this tape")

    adjoint = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for rec in reversed(tape._records):
        g = adjoint.pop(rec.out_id, None)
        if g is None:
            continue
        grads = rec.vjp(g)
        for t, gt in zip(rec.inputs, grads):
            if gt is None or not t.requires_grad:
                continue
            key = id(t)
            if key in adjoint:
                adjoint[key] = adjoint[key] + gt
            else:
                adjoint[key] = gt
            if key not in produced:
                leaves[key] = t
    for key, t in leaves.items():
        t.accumulate_grad(adjoint[key])


def zero_grads(params):
    for p in params:
        p.zero_grad()


def _out(data, inputs):
    req = any(t.requires_grad for t in inputs)
    return Tensor(data, requires_grad=req, dtype=data.dtype)


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(a, b, fwd, vjp_a, vjp_b, name):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = fwd(a.data, b.data)
    except ValueError as e:
        raise ShapeMismatchError(f"{name}: {a.data.shape} vs {b.data.shape}") from e
    out = _out(data, (a, b))

    def vjp(g):
        return (
            _unbroadcast(vjp_a(g, a.data, b.data), a.data.shape),
            _unbroadcast(vjp_b(g, a.data, b.data), b.data.shape),
        )

    return _emit(out, (a, b), vjp, name)


def add(a, b):
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g, "add")


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g, "sub")


def mul(a, b):
    return _binary(
        a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x, "mul"
    )


def div(a, b):
    return _binary(
        a,
        b,
        np.divide,
        lambda g, x, y: g / y,
        lambda g, x, y: -g * x / (y * y),
        "div",
    )


def neg(x):
    x = as_tensor(x)
    out = _out(-x.data, (x,))
    return _emit(out, (x,), lambda g: (-g,), "neg")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.shape} @ {b.shape}")
    out = _out(a.data @ b.data, (a, b))

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _emit(out, (a, b), vjp, "matmul")


def transpose(x):
    x = as_tensor(x)
    out = _out(x.data.T, (x,))
    return _emit(out, (x,), lambda g: (g.T,), "transpose")


def relu(x):
    x = as_tensor(x)
    out = _out(np.maximum(x.data, 0), (x,))
    mask = x.data > 0
    return _emit(out, (x,), lambda g: (g * mask,), "relu")


def sigmoid(x):
    x = as_tensor(x)
    # stable in both tails
    pos = x.data >= 0
    z = np.empty_like(x.data)
    z[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    z[~pos] = ex / (1.0 + ex)
    out = _out(z, (x,))
    return _emit(out, (x,), lambda g: (g * z * (1.0 - z),), "sigmoid")


def exp(x):
    x = as_tensor(x)
    data = np.exp(x.data)
    out = _out(data, (x,))
    return _emit(out, (x,), lambda g: (g * data,), "exp")


def log(x):
    x = as_tensor(x)
    out = _out(np.log(x.data), (x,))
    return _emit(out, (x,), lambda g: (g / x.data,), "log")


def sqrt(x):
    x = as_tensor(x)
    data = np.sqrt(x.data)
    out = _out(data, (x,))
    return _emit(out, (x,), lambda g: (g * 0.5 / data,), "sqrt")


def absolute(x):
    x = as_tensor(x)
    out = _out(np.abs(x.data), (x,))
    sign = np.sign(x.data)
    return _emit(out, (x,), lambda g: (g * sign,), "absolute")


def softmax_rows(x):
    """Row-wise softmax of a 2-D tensor (max-subtracted for stability)."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeMismatchError(f"softmax_rows expects 2-D, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = _out(s, (x,))

    def vjp(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - dot),)

    return _emit(out, (x,), vjp, "softmax_rows")


def sum_all(x):
    x = as_tensor(x)
    out = _out(np.asarray(x.data.sum(), dtype=x.dtype), (x,))

    def vjp(g):
        return (np.broadcast_to(g, x.data.shape).astype(x.dtype, copy=False),)

    return _emit(out, (x,), vjp, "sum_all")


def sum_rows(x):
    """Per-row sum of a 2-D tensor, keeping a (n, 1) column shape."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeMismatchError(f"sum_rows expects 2-D, got {x.shape}")
    out = _out(x.data.sum(axis=1, keepdims=True), (x,))

    def vjp(g):
        return (np.broadcast_to(g, x.data.shape).astype(x.dtype, copy=False),)

    return _emit(out, (x,), vjp, "sum_rows")


def mean_rows(x):
    """Mean across rows of a 2-D tensor, shape (1, d)."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeMismatchError(f"mean_rows expects 2-D, got {x.shape}")
    n = x.shape[0]
    out = _out(x.data.mean(axis=0, keepdims=True), (x,))

    def vjp(g):
        return (np.broadcast_to(g / n, x.data.shape).astype(x.dtype, copy=False),)

    return _emit(out, (x,), vjp, "mean_rows")


def concat(parts, axis=1):
    parts = [as_tensor(p) for p in parts]
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise ShapeMismatchError(str(e)) from e
    out = _out(data, tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _emit(out, tuple(parts), vjp, "concat")


def row_gather(x, idx):
    """out[i] = x[idx[i]]; the adjoint scatter-adds back into x's rows."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    if x.ndim != 2:
        raise ShapeMismatchError(f"row_gather expects 2-D, got {x.shape}")
    out = _out(x.data[idx], (x,))

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _emit(out, (x,), vjp, "row_gather")


def row_scatter_add(rows, idx, num_rows):
    """out[j] = sum of rows[i] over i with idx[i] == j (row-major order)."""
    rows = as_tensor(rows)
    idx = np.asarray(idx, dtype=np.int64)
    if rows.ndim != 2:
        raise ShapeMismatchError(f"row_scatter_add expects 2-D rows, got {rows.shape}")
    if len(idx) != rows.shape[0]:
        raise ShapeMismatchError(
            f"row_scatter_add: {len(idx)} indices for {rows.shape[0]} rows"
        )
    data = np.zeros((num_rows, rows.shape[1]), dtype=rows.dtype)
    np.add.at(data, idx, rows.data)
    out = _out(data, (rows,))

    def vjp(g):
        return (g[idx],)

    return _emit(out, (rows,), vjp, "row_scatter_add")


def dropout(x, rate, rng):
    """Inverted dropout: keep w.p. 1-rate and scale kept entries by 1/(1-rate)."""
    x = as_tensor(x)
    if rate <= 0.0:
        return x
    if rate >= 1.0:
        return _out(np.zeros_like(x.data), (as_tensor(x.data),))
    keep = (rng.random(x.data.shape) >= rate).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - rate))
    mask = keep * scale
    out = _out(x.data * mask, (x,))
    return _emit(out, (x,), lambda g: (g * mask,), "dropout")
