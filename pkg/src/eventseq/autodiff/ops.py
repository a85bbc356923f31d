"""Differentiable primitives.

Every function takes :class:`Tensor` (or array-like constants) and returns a
new Tensor. When a tape is active and some input requires a gradient, the
result is recorded together with a closure mapping the output gradient to
input gradients.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import DomainError, ShapeError, Tensor, active_tape, as_tensor

PROB_FLOOR = 1e-12


def _emit(kind: str, value: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(value)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(kind, parents, backward, out)
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("elementwise_mul", a, b)
    da, db = a.data, b.data

    def backward(g):
        ga = unbroadcast(g * db, da.shape) if a.requires_grad else None
        gb = unbroadcast(g * da, db.shape) if b.requires_grad else None
        return ga, gb

    return _emit("elementwise_mul", da * db, (a, b), backward)


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape, detail="batch axes") from None
    da, db = a.data, b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(g @ np.swapaxes(db, -1, -2), da.shape)
        if b.requires_grad:
            gb = unbroadcast(np.swapaxes(da, -1, -2) @ g, db.shape)
        return ga, gb

    return _emit("matmul", da @ db, (a, b), backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ShapeError("concat", detail="no inputs")
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
            t.shape[i] != ts[0].shape[i] for i in range(t.ndim) if i != ax
        ):
            raise ShapeError("concat", *(t.shape for t in ts), detail=f"axis={axis}")
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _emit("concat", np.concatenate([t.data for t in ts], axis=ax), ts, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts or any(t.shape != ts[0].shape for t in ts):
        raise ShapeError("stack", *(t.shape for t in ts))
    ax = axis % (ts[0].ndim + 1)

    def backward(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(ts)))

    return _emit("stack", np.stack([t.data for t in ts], axis=ax), ts, backward)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        value = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None
    src = x.shape
    return _emit("reshape", value, (x,), lambda g: (g.reshape(src),))


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    src = x.shape

    def backward(g):
        out = np.zeros(src)
        np.add.at(out, index, g)
        return (out,)

    return _emit("getitem", x.data[index], (x,), backward)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # Split by sign so exp never overflows.
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _emit("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _emit("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _emit("exp", y, (x,), lambda g: (g * y,))


def log(x, floor: float | None = None) -> Tensor:
    """Natural log.

    Without ``floor`` any non-positive entry raises :class:`DomainError`.
    With ``floor`` entries are clamped from below and the clamped entries
    receive zero gradient.
    """
    x = as_tensor(x)
    d = x.data
    if floor is None:
        if np.any(d <= 0):
            raise DomainError("log: non-positive input")
        return _emit("log", np.log(d), (x,), lambda g: (g / d,))
    live = d >= floor
    safe = np.where(live, d, floor)
    return _emit("log", np.log(safe), (x,), lambda g: (np.where(live, g / safe, 0.0),))


def softmax(x) -> Tensor:
    """Softmax over the last axis, shifted by the row maximum."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError("softmax_lastaxis", x.shape, detail="empty last axis")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit("softmax_lastaxis", y, (x,), backward)


def sum(x, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    src = x.shape
    value = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _emit("sum_axis", value, (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


def embedding(table, ids) -> Tensor:
    """Row lookup ``table[ids]`` for an integer array of ids."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError("embedding_lookup", table.shape, ids.shape, detail="table must be 2-D")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"embedding_lookup: id out of range [0, {table.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    rows = table.shape

    def backward(g):
        out = np.zeros(rows)
        np.add.at(out, ids, g)
        return (out,)

    return _emit("embedding_lookup", table.data[ids], (table,), backward)


def kl_div(target, approx, floor: float = PROB_FLOOR) -> Tensor:
    """Sum of ``t * ln(t / q)`` over every entry, with ``0 ln 0 = 0``.

    ``target`` is a constant. Rows of a batched input are summed, so the
    result is the total divergence of all rows.
    """
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    q = as_tensor(approx)
    if t.shape != q.shape:
        raise ShapeError("kl_div", t.shape, q.shape)
    if np.any(t < 0):
        raise DomainError("kl_div: negative target entry")
    qd = q.data
    live = qd >= floor
    safe = np.where(live, qd, floor)
    support = t > 0
    tlog = np.where(support, t * np.log(np.where(support, t, 1.0)), 0.0)
    value = tlog.sum() - (t * np.log(safe)).sum()

    def backward(g):
        return (np.where(live, -g * t / safe, 0.0),)

    return _emit("kl_div", np.asarray(value), (q,), backward)


def grad_reverse(x, scale: float) -> Tensor:
    """Identity forward; multiplies the incoming gradient by ``-scale``."""
    if scale < 0:
        raise ValueError(f"grad_reverse: scale must be >= 0, got {scale}")
    x = as_tensor(x)
    return _emit("grad_reverse", x.data, (x,), lambda g: (-scale * g,))


OPS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "elementwise_mul": mul,
    "concat": concat,
    "stack": stack,
    "reshape": reshape,
    "getitem": getitem,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "exp": exp,
    "log": log,
    "softmax_lastaxis": softmax,
    "sum_axis": sum,
    "embedding_lookup": embedding,
    "kl_div": kl_div,
    "grad_reverse": grad_reverse,
}


def forward(op_kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch a primitive by name."""
    try:
        fn = OPS[op_kind]
    except KeyError:
        raise ValueError(f"unknown op kind {op_kind!r}") from None
    if op_kind in ("concat", "stack"):
        return fn(inputs, **kwargs)
    return fn(*inputs, **kwargs)
