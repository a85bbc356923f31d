"""Reverse-mode sweep over a tape, with per-loss gradient barriers."""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np

from .tensor import Parameter, ShapeError, Tape, Tensor

_LOSS_NAMES: set[str] = {"gen", "att", "bol", "dom"}


def register_loss(name: str) -> None:
    _LOSS_NAMES.add(name)


def registered_losses() -> frozenset[str]:
    return frozenset(_LOSS_NAMES)


def with_barrier(loss_name: str, params: Iterable[Parameter]) -> list[Parameter]:
    """Stop gradients of ``loss_name`` from reaching ``params``."""
    register_loss(loss_name)
    out = []
    for p in params:
        p.barriers = p.barriers | {loss_name}
        out.append(p)
    return out


def _check_scalar(loss: Tensor) -> None:
    if loss.data.size != 1:
        raise ShapeError("backward", loss.shape, detail="loss must be a scalar")


def _sweep(tape: Tape, seeds: list[tuple[Tensor, float]],
           skip: frozenset[Parameter]) -> dict[Parameter, np.ndarray]:
    grads: dict[int, np.ndarray] = {}
    leaves: dict[Parameter, np.ndarray] = {}
    start = -1
    for t, w in seeds:
        if t.tape is not tape or t.node is None:
            continue
        seed = np.full(t.shape, float(w))
        grads[t.node] = grads[t.node] + seed if t.node in grads else seed
        start = max(start, t.node)
    nodes = tape.nodes
    for i in range(start, -1, -1):
        g = grads.pop(i, None)
        if g is None:
            continue
        node = nodes[i]
        for p, gp in zip(node.parents, node.backward(g)):
            if gp is None or not p.requires_grad:
                continue
            if p.tape is tape and p.node is not None:
                j = p.node
                grads[j] = grads[j] + gp if j in grads else gp
            elif isinstance(p, Parameter) and p not in skip:
                leaves[p] = leaves[p] + gp if p in leaves else gp
    return leaves


def _barred_reachable(tape: Tape, root: Tensor, loss_name: str) -> frozenset[Parameter]:
    if root.tape is not tape or root.node is None:
        return frozenset()
    nodes = tape.nodes
    mark = bytearray(root.node + 1)
    mark[root.node] = 1
    found = set()
    for i in range(root.node, -1, -1):
        if not mark[i]:
            continue
        for p in nodes[i].parents:
            if p.tape is tape and p.node is not None:
                mark[p.node] = 1
            elif isinstance(p, Parameter) and loss_name in p.barriers:
                found.add(p)
    return frozenset(found)


def backward_terms(terms: Mapping[str, tuple[Tensor, float]], tape: Tape | None = None,
                   accumulate: bool = True) -> dict[Parameter, np.ndarray]:
    """Gradient of ``sum(weight * loss)`` over named loss terms.

    A parameter carrying a barrier for a term receives no gradient from
    that term. Terms that reach no barred parameter share a single sweep;
    every other term is swept on its own with its barred parameters masked.
    """
    if not terms:
        return {}
    for loss, _ in terms.values():
        _check_scalar(loss)
    if tape is None:
        tape = next((loss.tape for loss, _ in terms.values() if loss.tape is not None), None)
    if tape is None:
        return {}
    shared: list[tuple[Tensor, float]] = []
    separate: list[tuple[Tensor, float, frozenset[Parameter]]] = []
    for name, (loss, weight) in terms.items():
        barred = _barred_reachable(tape, loss, name)
        if barred:
            separate.append((loss, weight, barred))
        else:
            shared.append((loss, weight))
    total: dict[Parameter, np.ndarray] = {}
    passes = [(shared, frozenset())] if shared else []
    passes += [([(loss, w)], barred) for loss, w, barred in separate]
    for seeds, skip in passes:
        for p, g in _sweep(tape, seeds, skip).items():
            total[p] = total[p] + g if p in total else g
    if accumulate:
        for p, g in total.items():
            p.grad = p.grad + g
    return total


def backward(loss: Tensor, tape: Tape | None = None, loss_name: str | None = None,
             accumulate: bool = True) -> dict[Parameter, np.ndarray]:
    """Gradients of a scalar ``loss`` keyed by parameter.

    With ``loss_name`` the barriers registered for that name apply.
    """
    _check_scalar(loss)
    if loss_name is not None:
        return backward_terms({loss_name: (loss, 1.0)}, tape, accumulate)
    tape = tape or loss.tape
    if tape is None:
        return {}
    grads = _sweep(tape, [(loss, 1.0)], frozenset())
    if accumulate:
        for p, g in grads.items():
            p.grad = p.grad + g
    return grads
