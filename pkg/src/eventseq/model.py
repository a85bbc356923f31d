"""Encoder, tracing decoder and domain heads bundled as one trainable model."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Parameter, Tensor, backward_terms, ops
from .corpus import EventSchema, Sentence, build_decoding_target
from .decoder import (DecoderParams, DecoderState, Memory, TeacherForcing, decode_step,
                      make_memory)
from .domains import DomainHeads, StrategyConfig, domain_aux_loss, pooled_features
from .encoder import EncodedBatch, EncoderParams, Vocabulary, encode_batch
from .rng import substream

CHECKPOINT_VERSION = 1
BOL_SOURCES = ("logits", "probs")


@dataclass
class ModelConfig:
    d_emb: int = 32
    d_hidden: int = 32
    d_state: int = 32
    d_label: int = 16
    mask_mode: str = "select"
    bol_source: str = "logits"
    alpha_loss: float = 1.0
    beta_loss: float = 0.1

    def validate(self) -> None:
        for k in ("d_emb", "d_hidden", "d_state", "d_label"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")
        if self.mask_mode not in ("select", "product"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")
        if self.bol_source not in BOL_SOURCES:
            raise ValueError(f"unknown bol_source {self.bol_source!r}")
        if self.alpha_loss < 0 or self.beta_loss < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class Batch:
    """Right-padded training batch; T is the longest target sequence."""

    token_ids: list[list[int]]
    labels_in: np.ndarray    # (B, T) previous labels, BOS first
    labels_out: np.ndarray   # (B, T) gold labels
    step_mask: np.ndarray    # (B, T) 1 on real steps
    gold_index: np.ndarray   # (B, T) encoder row used for teacher forcing
    gold_dist: np.ndarray    # (B, T, L) gold attention, zero on padding
    bag: np.ndarray          # (B, num_labels) 0/1 bag-of-labels target
    domain_ids: np.ndarray   # (B,)

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass
class LossBreakdown:
    gen: Tensor
    att: Tensor
    bol: Tensor
    dom: Tensor | None
    alpha_loss: float
    beta_loss: float
    lambda_dom: float = 0.0
    domain_accuracy: float | None = None

    @property
    def J(self) -> float:
        total = self.gen.item() + self.alpha_loss * self.att.item() + self.beta_loss * self.bol.item()
        if self.dom is not None:
            total += self.lambda_dom * self.dom.item()
        return total

    def terms(self) -> dict[str, tuple[Tensor, float]]:
        out = {"gen": (self.gen, 1.0), "att": (self.att, self.alpha_loss), "bol": (self.bol, self.beta_loss)}
        if self.dom is not None:
            out["dom"] = (self.dom, self.lambda_dom)
        return out

    def as_floats(self) -> dict[str, float]:
        return {"J": self.J, "gen": self.gen.item(), "att": self.att.item(), "bol": self.bol.item(),
                "dom": self.dom.item() if self.dom is not None else 0.0}


def generation_loss(Y: Tensor, labels: np.ndarray, step_mask: np.ndarray) -> Tensor:
    """Summed negative log-likelihood of the gold labels over real steps."""
    B, T, K = Y.shape
    gold = np.zeros((B, T, K))
    gold[np.arange(B)[:, None], np.arange(T)[None, :], labels] = 1.0
    gold *= step_mask[..., None]
    return ops.mul(ops.sum(ops.mul(ops.log(Y, floor=1e-12), gold)), -1.0)


def bag_loss(scores: Tensor, step_mask: np.ndarray, bag: np.ndarray) -> Tensor:
    """KL between the 0/1 label bag and the sigmoid of step scores summed over time."""
    p_bag = ops.sigmoid(ops.sum(ops.mul(scores, step_mask[..., None]), axis=1))
    return ops.kl_div(bag, p_bag)


@dataclass
class TracingModel:
    schema: EventSchema
    vocab: Vocabulary
    config: ModelConfig
    encoder: EncoderParams
    decoder: DecoderParams
    heads: DomainHeads
    strategy: StrategyConfig = field(default_factory=StrategyConfig)

    @classmethod
    def init(cls, schema: EventSchema, vocab: Vocabulary, config: ModelConfig | None = None,
             strategy: StrategyConfig | None = None, domains: Sequence[str] = (), seed: int = 0) -> "TracingModel":
        config = config or ModelConfig()
        config.validate()
        strategy = strategy or StrategyConfig()
        # one stream per component, so optional heads leave the rest untouched
        encoder = EncoderParams.init(substream(seed, "init", 0), len(vocab), config.d_emb, config.d_hidden)
        heads = DomainHeads.init(substream(seed, "init", 1), encoder.out_dim, strategy, list(domains))
        memory_dim = heads.out_dim(encoder.out_dim)
        decoder = DecoderParams.init(substream(seed, "init", 2), memory_dim, config.d_state, config.d_label,
                                     schema.num_labels)
        return cls(schema, vocab, config, encoder, decoder, heads, strategy)

    @property
    def domains(self) -> tuple[str, ...]:
        return self.heads.domains

    def parameters(self) -> list[Parameter]:
        return self.encoder.parameters() + self.heads.parameters() + self.decoder.parameters()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def domain_index(self, domain: str | None) -> int:
        if domain is None or domain not in self.domains:
            if self.heads.transforms:
                raise KeyError(f"model has no private transform for domain {domain!r}")
            return 0
        return self.domains.index(domain)

    # -- batching -------------------------------------------------------------

    def make_batch(self, sentences: Sequence[Sentence], domains: Sequence[str | None] | None = None) -> Batch:
        if not sentences:
            raise ValueError("compute_losses: empty batch")
        targets = [build_decoding_target(s) for s in sentences]
        B = len(sentences)
        T = max(len(t) for t in targets)
        L = max(len(s.tokens) for s in sentences) + 2
        K = self.schema.num_labels
        labels_in = np.full((B, T), self.schema.bos_id, dtype=np.int64)
        labels_out = np.full((B, T), self.schema.eos_id, dtype=np.int64)
        step_mask = np.zeros((B, T))
        gold_index = np.zeros((B, T), dtype=np.int64)
        gold_dist = np.zeros((B, T, L))
        bag = np.zeros((B, K))
        for b, tgt in enumerate(targets):
            ids = [self.schema.label_id(x) for x in tgt.labels]
            n = len(ids)
            labels_out[b, :n] = ids
            labels_in[b, 1:n] = ids[:-1]
            step_mask[b, :n] = 1.0
            gold_index[b, :n] = tgt.attention_index
            gold_index[b, n:] = tgt.length + 1
            gold_dist[b, :n, :tgt.length + 2] = tgt.attention_distribution()
            for lab in tgt.bag():
                bag[b, self.schema.label_id(lab)] = 1.0
        domain_ids = np.array([self.domain_index(d) for d in (domains or [None] * B)], dtype=np.int64)
        token_ids = [self.vocab.encode(s.tokens) for s in sentences]
        return Batch(token_ids, labels_in, labels_out, step_mask, gold_index, gold_dist, bag, domain_ids)

    # -- forward ----------------------------------------------------------------

    def encode(self, token_ids: Sequence[Sequence[int]], domain_ids: np.ndarray) -> tuple[EncodedBatch, Tensor]:
        """Encoder states and the (possibly transformed) decoder memory rows."""
        enc = encode_batch(token_ids, self.encoder)
        return enc, self.heads.transform(enc.H, domain_ids)

    def memory(self, token_ids: Sequence[Sequence[int]], domain_ids: np.ndarray) -> Memory:
        enc, H = self.encode(token_ids, domain_ids)
        return make_memory(H, self.decoder, enc.valid)

    def compute_losses(self, batch: Batch, tf: TeacherForcing | None = None, lambda_dom: float = 0.0,
                       grl: float | None = None) -> LossBreakdown:
        """Generation, attention and bag-of-labels losses for one batch.

        ``tf`` defaults to always-gold teacher forcing. When ``grl`` is not
        None the domain features pass through gradient reversal first.
        """
        tf = tf or TeacherForcing(1.0)
        enc, H = self.encode(batch.token_ids, batch.domain_ids)
        memory = make_memory(H, self.decoder, enc.valid)
        B, T = batch.labels_in.shape
        state = DecoderState.initial(B, self.decoder)
        logits, alpha_hats = [], []
        for t in range(T):
            step = decode_step(state, batch.labels_in[:, t], memory, self.decoder, tf,
                               batch.gold_index[:, t], self.config.mask_mode, with_probs=False)
            state = step.state
            logits.append(step.logits)
            alpha_hats.append(step.alpha_hat)
        O = ops.stack(logits, axis=1)
        Y = ops.softmax(O)
        gen = generation_loss(Y, batch.labels_out, batch.step_mask)
        att = ops.kl_div(batch.gold_dist, ops.stack(alpha_hats, axis=1))
        bol = bag_loss(O if self.config.bol_source == "logits" else Y, batch.step_mask, batch.bag)

        dom, acc = None, None
        if self.heads.classifies:
            feats = pooled_features(enc.H, enc.tokens)
            if grl is not None:
                feats = ops.grad_reverse(feats, grl)
            dom, acc = domain_aux_loss(feats, batch.domain_ids, self.heads)
        return LossBreakdown(gen, att, bol, dom, self.config.alpha_loss, self.config.beta_loss,
                             lambda_dom, acc)

    def backward(self, losses: LossBreakdown, extra: dict[str, tuple[Tensor, float]] | None = None):
        terms = losses.terms()
        if extra:
            terms.update(extra)
        return backward_terms(terms)

    # -- checkpoints ------------------------------------------------------------

    def meta(self) -> dict:
        strategy = asdict(self.strategy)
        strategy.pop("grl_schedule", None)
        strategy["domains"] = list(strategy["domains"])
        return {
            "format_version": CHECKPOINT_VERSION,
            "model": asdict(self.config),
            "strategy": strategy,
            "domains": list(self.domains),
            "schema_types": list(self.schema.types),
            "vocab": list(self.vocab.tokens),
        }

    def save(self, path: str | Path) -> None:
        arrays = {p.name: p.data for p in self.parameters()}
        arrays["__meta__"] = np.frombuffer(json.dumps(self.meta(), sort_keys=True).encode("utf-8"), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "TracingModel":
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
        try:
            meta = json.loads(arrays.pop("__meta__").tobytes().decode("utf-8"))
        except KeyError:
            raise ValueError(f"{path}: not a model checkpoint (no metadata)") from None
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
        vocab = Vocabulary()
        for t in meta["vocab"][3:]:
            vocab.add(t)
        strategy = meta["strategy"]
        strategy["domains"] = tuple(strategy["domains"])
        model = cls.init(EventSchema(tuple(meta["schema_types"])), vocab, ModelConfig(**meta["model"]),
                         StrategyConfig(**strategy), meta["domains"], seed=0)
        params = model.parameters()
        if {p.name for p in params} != set(arrays):
            raise ValueError(f"{path}: parameter set does not match the stored configuration")
        for p in params:
            p.assign(arrays[p.name])
        return model
