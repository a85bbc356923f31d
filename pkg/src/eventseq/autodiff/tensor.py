"""Dense tensors, trainable parameters and the recording tape."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""

    def __init__(self, op: str, *shapes: tuple[int, ...], detail: str = ""):
        self.op = op
        self.shapes = shapes
        msg = f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DomainError(ValueError):
    """Raised when an operation is evaluated outside its mathematical domain."""


class Tensor:
    """A float64 array, treated as immutable, optionally tied to a tape node."""

    __slots__ = ("data", "requires_grad", "node", "tape", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.node: int | None = None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape, detail="not a scalar")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)


class Parameter(Tensor):
    """A leaf tensor that receives gradients.

    ``barriers`` names the losses whose gradients must never reach this
    parameter. ``grad`` is the accumulator filled by :func:`backward`.
    """

    __slots__ = ("name", "grad", "trainable", "barriers")

    def __init__(self, data, name: str = "", trainable: bool = True,
                 barriers: Sequence[str] = ()):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.trainable = trainable
        self.barriers: frozenset[str] = frozenset(barriers)

    def assign(self, value: np.ndarray) -> None:
        value = np.array(value, dtype=np.float64, copy=True)
        if value.shape != self.data.shape:
            raise ShapeError("assign", self.data.shape, value.shape)
        self.data = value

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


@dataclass
class Node:
    kind: str
    parents: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    out: Tensor


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    Insertion order is a valid topological order, so a backward pass walks
    the node list in reverse.
    """

    nodes: list[Node] = field(default_factory=list)

    def record(self, kind: str, parents: tuple[Tensor, ...], backward, out: Tensor) -> Tensor:
        out.node = len(self.nodes)
        out.tape = self
        self.nodes.append(Node(kind, parents, backward, out))
        return out

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _state.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()


class _TapeState(threading.local):
    def __init__(self):
        self.stack: list[Tape] = []


_state = _TapeState()


def active_tape() -> Tape | None:
    return _state.stack[-1] if _state.stack else None


class no_record:
    """Context manager that suspends recording on this thread."""

    def __enter__(self):
        self._saved = _state.stack
        _state.stack = []

    def __exit__(self, *exc):
        _state.stack = self._saved


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
