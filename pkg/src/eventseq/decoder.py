"""Tracing-attention LSTM decoder.

At every step the decoder state scores each encoder row bilinearly, a
one-hot mask picks a single row (gold or argmax under dynamic teacher
forcing) and that row becomes the context for the label distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, ShapeError, Tensor, ops, with_barrier, xavier_uniform
from .encoder import LSTMParams, lstm_cell

MASK_MODES = ("select", "product")
NEG_INF = -1e9


@dataclass
class DecoderParams:
    W_a: Parameter
    lstm: LSTMParams
    W_d: Parameter
    label_embedding: Parameter

    @property
    def state_dim(self) -> int:
        return self.lstm.hidden

    @property
    def memory_dim(self) -> int:
        return self.W_a.shape[0]

    @property
    def num_labels(self) -> int:
        return self.W_d.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, memory_dim: int, state_dim: int, label_dim: int,
             num_labels: int) -> "DecoderParams":
        W_a = Parameter(xavier_uniform(rng, memory_dim, state_dim), name="dec.W_a")
        # the attention map learns only from the supervised attention loss
        with_barrier("gen", [W_a])
        with_barrier("bol", [W_a])
        with_barrier("dom", [W_a])
        return cls(
            W_a,
            LSTMParams.init(rng, label_dim + memory_dim, state_dim, "dec.lstm"),
            Parameter(xavier_uniform(rng, state_dim + memory_dim, num_labels), name="dec.W_d"),
            Parameter(xavier_uniform(rng, num_labels, label_dim), name="dec.label_embedding"),
        )

    def parameters(self) -> list[Parameter]:
        return [self.W_a, *self.lstm.parameters(), self.W_d, self.label_embedding]


@dataclass
class Memory:
    """Encoder rows plus their projections through ``W_a``."""

    H: Tensor
    keys: Tensor
    bias: np.ndarray | None = None

    @property
    def rows(self) -> int:
        return self.H.shape[-2]


def make_memory(H: Tensor, params: DecoderParams, valid: np.ndarray | None = None) -> Memory:
    if H.shape[-1] != params.memory_dim:
        raise ShapeError("attention", H.shape, params.W_a.shape)
    bias = None
    if valid is not None and not valid.all():
        bias = np.where(valid > 0, 0.0, NEG_INF)
    return Memory(H, H @ params.W_a, bias)


def attention_weights(s_t: Tensor, memory: Memory) -> Tensor:
    """Softmax over rows of ``s_t . W_a . h_i``; shape (B, rows)."""
    if s_t.shape[-1] != memory.keys.shape[-1]:
        raise ShapeError("attention_weights", s_t.shape, memory.keys.shape)
    B = s_t.shape[0]
    scores = ops.reshape(memory.keys @ ops.reshape(s_t, (B, -1, 1)), (B, memory.rows))
    if memory.bias is not None:
        scores = scores + memory.bias
    return ops.softmax(scores)


class TeacherForcing:
    """Per-step Bernoulli(rho) choice between gold and argmax attention rows."""

    def __init__(self, rho: float, rng: np.random.Generator | None = None):
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"rho must be in [0, 1], got {rho}")
        self.rho = rho
        self.rng = rng or np.random.default_rng(0)
        self.gold_picks = 0
        self.predicted_picks = 0
        self.argmax_calls = 0

    def choose(self, alpha_hat: np.ndarray, gold: np.ndarray | None) -> np.ndarray:
        B, L = alpha_hat.shape
        if gold is None:
            self.argmax_calls += 1
            self.predicted_picks += B
            return alpha_hat.argmax(axis=-1)
        gold = np.asarray(gold, dtype=np.int64)
        if gold.shape != (B,) or gold.min() < 0 or gold.max() >= L:
            raise IndexError(f"trace_mask: gold index out of range [0, {L}): {gold}")
        use_gold = self.rng.random(B) < self.rho
        self.gold_picks += int(use_gold.sum())
        self.predicted_picks += int(B - use_gold.sum())
        if use_gold.all():
            return gold
        self.argmax_calls += 1
        return np.where(use_gold, gold, alpha_hat.argmax(axis=-1))


def trace_mask(alpha_hat: Tensor, gold_index: np.ndarray | None, tf: TeacherForcing | None,
               mode: str = "select") -> tuple[np.ndarray, Tensor]:
    """One-hot mask ``I_t`` and the applied weights ``alpha_t``.

    Without ``gold_index`` (inference) the argmax row is always used. In
    ``select`` mode the picked row gets weight exactly 1; ``product`` mode
    keeps the preliminary weight of that row instead.
    """
    if mode not in MASK_MODES:
        raise ValueError(f"unknown mask mode {mode!r}")
    a = alpha_hat.data
    if gold_index is None or tf is None:
        idx = a.argmax(axis=-1)
        if tf is not None:
            tf.argmax_calls += 1
            tf.predicted_picks += len(idx)
    else:
        idx = tf.choose(a, gold_index)
    mask = np.zeros_like(a)
    mask[np.arange(a.shape[0]), idx] = 1.0
    alpha = Tensor(mask) if mode == "select" else alpha_hat * mask
    return mask, alpha


def context_vector(alpha: Tensor, H: Tensor) -> Tensor:
    """``sum_i alpha_i h_i`` for each batch row; shape (B, d)."""
    alpha = alpha if isinstance(alpha, Tensor) else Tensor(alpha)
    B, L = alpha.shape
    if H.shape[-2] != L:
        raise ShapeError("context_vector", alpha.shape, H.shape)
    return ops.reshape(ops.reshape(alpha, (B, 1, L)) @ H, (B, H.shape[-1]))


@dataclass
class DecoderState:
    s: Tensor
    cell: Tensor
    context: Tensor

    @classmethod
    def initial(cls, batch: int, params: DecoderParams) -> "DecoderState":
        z = np.zeros((batch, params.state_dim))
        return cls(Tensor(z), Tensor(z), Tensor(np.zeros((batch, params.memory_dim))))

    def take(self, rows: np.ndarray) -> "DecoderState":
        return DecoderState(Tensor(self.s.data[rows]), Tensor(self.cell.data[rows]),
                            Tensor(self.context.data[rows]))


@dataclass
class StepTrace:
    alpha_hat: Tensor
    mask: np.ndarray
    alpha: Tensor
    context: Tensor
    state: DecoderState
    logits: Tensor
    probs: Tensor | None


def decode_step(state: DecoderState, prev_labels: np.ndarray, memory: Memory, params: DecoderParams,
                tf: TeacherForcing | None = None, gold_index: np.ndarray | None = None,
                mode: str = "select", with_probs: bool = True) -> StepTrace:
    prev_labels = np.asarray(prev_labels, dtype=np.int64)
    if prev_labels.min() < 0 or prev_labels.max() >= params.num_labels:
        raise IndexError(f"decode_step: label id outside [0, {params.num_labels})")
    x = ops.concat([ops.embedding(params.label_embedding, prev_labels), state.context], axis=-1)
    s, cell = lstm_cell(x @ params.lstm.Wx + params.lstm.b, state.s, state.cell, params.lstm.Wh)
    alpha_hat = attention_weights(s, memory)
    mask, alpha = trace_mask(alpha_hat, gold_index, tf, mode)
    c = context_vector(alpha, memory.H)
    logits = ops.concat([s, c], axis=-1) @ params.W_d
    probs = ops.softmax(logits) if with_probs else None
    return StepTrace(alpha_hat, mask, alpha, c, DecoderState(s, cell, c), logits, probs)
