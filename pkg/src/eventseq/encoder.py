"""Token embeddings followed by a single-layer bidirectional LSTM."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Parameter, Tensor, ops, xavier_uniform

UNK, HEAD, TAIL = "[UNK]", "[BOS]", "[SEP]"
UNK_ID, HEAD_ID, TAIL_ID = 0, 1, 2


class Vocabulary:
    """Token to id map; ids 0-2 are reserved for UNK, BOS and SEP."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.tokens: list[str] = [UNK, HEAD, TAIL]
        self.index: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in tokens]

    @classmethod
    def from_sentences(cls, sentences) -> "Vocabulary":
        vocab = cls()
        for s in sentences:
            for t in s.tokens:
                vocab.add(t)
        return vocab

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if lines[:3] != [UNK, HEAD, TAIL]:
            raise ValueError(f"{path}: first three entries must be {UNK}, {HEAD}, {TAIL}")
        vocab = cls()
        for t in lines[3:]:
            vocab.add(t)
        return vocab


@dataclass
class LSTMParams:
    Wx: Parameter
    Wh: Parameter
    b: Parameter

    @property
    def hidden(self) -> int:
        return self.Wh.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_hidden: int, prefix: str) -> "LSTMParams":
        return cls(
            Parameter(xavier_uniform(rng, d_in, 4 * d_hidden), name=f"{prefix}.Wx"),
            Parameter(xavier_uniform(rng, d_hidden, 4 * d_hidden), name=f"{prefix}.Wh"),
            Parameter(np.zeros(4 * d_hidden), name=f"{prefix}.b"),
        )

    def parameters(self) -> list[Parameter]:
        return [self.Wx, self.Wh, self.b]


def lstm_cell(x_proj: Tensor, h: Tensor, c: Tensor, Wh: Parameter) -> tuple[Tensor, Tensor]:
    """One LSTM step given the input projection ``x W_x + b``.

    Gate layout along the last axis is [input, forget, output, candidate].
    """
    d = Wh.shape[0]
    z = x_proj + h @ Wh
    gates = ops.sigmoid(z[..., : 3 * d])
    cand = ops.tanh(z[..., 3 * d:])
    c_new = gates[..., d: 2 * d] * c + gates[..., :d] * cand
    h_new = gates[..., 2 * d: 3 * d] * ops.tanh(c_new)
    return h_new, c_new


@dataclass
class EncoderParams:
    embedding: Parameter
    forward: LSTMParams
    backward: LSTMParams

    @property
    def out_dim(self) -> int:
        return 2 * self.forward.hidden

    @classmethod
    def init(cls, rng: np.random.Generator, vocab_size: int, d_emb: int, d_hidden: int) -> "EncoderParams":
        emb = Parameter(xavier_uniform(rng, vocab_size, d_emb), name="enc.embedding")
        return cls(emb, LSTMParams.init(rng, d_emb, d_hidden, "enc.fwd"),
                   LSTMParams.init(rng, d_emb, d_hidden, "enc.bwd"))

    def parameters(self) -> list[Parameter]:
        return [self.embedding, *self.forward.parameters(), *self.backward.parameters()]


@dataclass
class EncodedBatch:
    """Hidden states for a right-padded batch.

    ``H`` has shape (B, L, 2*d_h); row 0 of each sentence is the head
    sentinel and row n+1 the tail sentinel. ``valid`` marks rows 0..n+1,
    ``tokens`` marks rows 1..n.
    """

    H: Tensor
    lengths: np.ndarray
    valid: np.ndarray
    tokens: np.ndarray

    def __len__(self) -> int:
        return len(self.lengths)


def pad_ids(token_ids: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(t) for t in token_ids], dtype=np.int64)
    L = int(lengths.max()) + 2
    ids = np.full((len(token_ids), L), UNK_ID, dtype=np.int64)
    for b, row in enumerate(token_ids):
        ids[b, 0] = HEAD_ID
        ids[b, 1:len(row) + 1] = row
        ids[b, len(row) + 1] = TAIL_ID
    return ids, lengths


def encode_batch(token_ids: Sequence[Sequence[int]], params: EncoderParams) -> EncodedBatch:
    if not token_ids:
        raise ValueError("encode: empty batch")
    vocab_size = params.embedding.shape[0]
    for row in token_ids:
        if len(row) and (min(row) < 0 or max(row) >= vocab_size):
            raise IndexError(f"encode: token id outside vocabulary of size {vocab_size}")
    ids, lengths = pad_ids(token_ids)
    B, L = ids.shape
    pos = np.arange(L)
    valid = (pos[None, :] <= lengths[:, None] + 1).astype(np.float64)
    tokens = ((pos[None, :] >= 1) & (pos[None, :] <= lengths[:, None])).astype(np.float64)

    E = ops.embedding(params.embedding, ids)
    outs = []
    for lstm, order in ((params.forward, range(L)), (params.backward, range(L - 1, -1, -1))):
        d = lstm.hidden
        xp = E @ lstm.Wx + lstm.b
        h = c = Tensor(np.zeros((B, d)))
        states = [None] * L
        backward_pass = lstm is params.backward
        for t in order:
            h, c = lstm_cell(xp[:, t], h, c, lstm.Wh)
            if backward_pass:
                # padded tail rows must not leak into the reverse recurrence
                m = valid[:, t:t + 1]
                if not m.all():
                    h, c = h * m, c * m
            states[t] = h
        outs.append(ops.stack(states, axis=1))
    H = ops.concat(outs, axis=-1)
    return EncodedBatch(H, lengths, valid, tokens)


def encode(token_ids: Sequence[int], params: EncoderParams) -> Tensor:
    """Hidden states of one sentence, shape (n+2, 2*d_h)."""
    return encode_batch([token_ids], params).H[0]
