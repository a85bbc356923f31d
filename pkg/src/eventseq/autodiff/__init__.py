"""A small dense-tensor engine with reverse-mode differentiation."""

from . import ops
from .grad import backward, backward_terms, register_loss, registered_losses, with_barrier
from .ops import forward
from .optim import Optimizer, OptimizerConfig, optimizer_step, xavier_uniform
from .tensor import DomainError, Parameter, ShapeError, Tape, Tensor, no_record


def kl_div(target, approx):
    return ops.kl_div(target, approx)


__all__ = [
    "DomainError", "Optimizer", "OptimizerConfig", "Parameter", "ShapeError", "Tape",
    "Tensor", "backward", "backward_terms", "forward", "kl_div", "no_record", "ops",
    "optimizer_step", "register_loss", "registered_losses", "with_barrier", "xavier_uniform",
]
