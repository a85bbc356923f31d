"""Parameter update rules and initializers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .tensor import Parameter


@dataclass
class OptimizerConfig:
    rule: str = "adam"
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.rule not in ("sgd", "adam"):
            raise ValueError(f"unknown update rule {self.rule!r}")
        if self.learning_rate < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate}")


@dataclass
class Optimizer:
    config: OptimizerConfig
    step_count: int = 0
    first: dict[int, np.ndarray] = field(default_factory=dict)
    second: dict[int, np.ndarray] = field(default_factory=dict)

    def step(self, params: Iterable[Parameter],
             gradients: Mapping[Parameter, np.ndarray] | None = None) -> None:
        """Apply one update. ``gradients`` defaults to each ``p.grad``."""
        cfg = self.config
        self.step_count += 1
        t = self.step_count
        for p in params:
            if not p.trainable:
                continue
            g = p.grad if gradients is None else gradients.get(p)
            if g is None:
                g = np.zeros_like(p.data)
            if cfg.rule == "sgd":
                p.assign(p.data - cfg.learning_rate * g)
                continue
            key = id(p)
            m = self.first.get(key)
            v = self.second.get(key)
            m = (1 - cfg.beta1) * g if m is None else cfg.beta1 * m + (1 - cfg.beta1) * g
            v = (1 - cfg.beta2) * g * g if v is None else cfg.beta2 * v + (1 - cfg.beta2) * g * g
            self.first[key], self.second[key] = m, v
            m_hat = m / (1 - cfg.beta1 ** t)
            v_hat = v / (1 - cfg.beta2 ** t)
            p.assign(p.data - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps))


def optimizer_step(params: Iterable[Parameter], gradients: Mapping[Parameter, np.ndarray],
                   config: OptimizerConfig, optimizer: Optimizer | None = None) -> Optimizer:
    """Functional wrapper around :class:`Optimizer`; returns the advanced state."""
    optimizer = optimizer or Optimizer(config)
    optimizer.step(params, gradients)
    return optimizer


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))
