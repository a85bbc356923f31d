"""Central finite-difference checks against the tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .grad import backward
from .tensor import Parameter, Tape, Tensor, no_record


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error; 0 when both sides vanish."""
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-12:
        return float(diff)
    return float(diff / scale)


def numeric_gradient(fn: Callable[[], Tensor], param: Parameter, step: float = 1e-5) -> np.ndarray:
    base = param.data.copy()
    out = np.zeros_like(base)
    flat = out.reshape(-1)
    with no_record():
        for k in range(base.size):
            probe = base.copy().reshape(-1)
            probe[k] += step
            param.assign(probe.reshape(base.shape))
            hi = fn().item()
            probe[k] -= 2 * step
            param.assign(probe.reshape(base.shape))
            lo = fn().item()
            flat[k] = (hi - lo) / (2 * step)
    param.assign(base)
    return out


def check_gradients(fn: Callable[[], Tensor], params: Sequence[Parameter],
                    step: float = 1e-5) -> dict[str, float]:
    """Relative error per parameter between tape and finite differences.

    ``fn`` must rebuild the scalar from ``params`` on every call.
    """
    with Tape() as tape:
        loss = fn()
    grads = backward(loss, tape, accumulate=False)
    errors = {}
    for i, p in enumerate(params):
        analytic = grads.get(p, np.zeros_like(p.data))
        errors[p.name or f"p{i}"] = relative_error(analytic, numeric_gradient(fn, p, step))
    return errors
