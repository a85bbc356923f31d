"""Mini-batch training with dynamic teacher forcing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autodiff import Optimizer, OptimizerConfig, Tape, no_record, ops
from .corpus import Corpus, Sentence, augment_concat
from .decoder import TeacherForcing
from .domains import StrategyConfig, domain_aux_loss, pooled_features
from .encoder import Vocabulary
from .model import ModelConfig, TracingModel
from .rng import substream

LOG_COLUMNS = ("epoch", "J", "gen", "att", "bol", "dom", "dom_acc", "dev_J")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    seed: int = 13
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 5e-3
    optimizer: str = "adam"
    rho: float = 0.9
    clip_norm: float = 5.0
    augment: float = 0.0
    max_length: int | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")
        if not 0.0 <= self.augment <= 1.0:
            raise ValueError("augment must be in [0, 1]")
        self.model.validate()
        OptimizerConfig(self.optimizer, self.learning_rate)


@dataclass
class TrainingLog:
    rows: list[dict[str, float]] = field(default_factory=list)
    gold_picks: int = 0
    predicted_picks: int = 0
    argmax_calls: int = 0

    def to_tsv(self) -> str:
        lines = ["\t".join(LOG_COLUMNS)]
        for r in self.rows:
            lines.append("\t".join(str(r["epoch"]) if k == "epoch" else repr(float(r[k])) for k in LOG_COLUMNS))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i:i + size] for i in range(0, n, size)]


def _clip(grads: dict, max_norm: float) -> None:
    if max_norm <= 0:
        return
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for p in grads:
            grads[p] = grads[p] * scale


def _augmented(items: list[tuple[Sentence, str]], fraction: float, max_length: int | None,
               rng: np.random.Generator) -> list[tuple[Sentence, str]]:
    """Extra examples made by joining two same-domain sentences."""
    k = int(round(fraction * len(items)))
    out = []
    for _ in range(k):
        i, j = rng.integers(len(items), size=2)
        (s1, d1), (s2, d2) = items[int(i)], items[int(j)]
        if d1 != d2 or (max_length and len(s1) + len(s2) > max_length):
            continue
        out.append((augment_concat(s1, s2), d1))
    return out


def evaluate_loss(model: TracingModel, items: Sequence[tuple[Sentence, str]], batch_size: int = 64) -> float:
    """Summed J over ``items`` with gold attention forced at every step."""
    total = 0.0
    with no_record():
        for i in range(0, len(items), batch_size):
            chunk = items[i:i + batch_size]
            batch = model.make_batch([s for s, _ in chunk], [d for _, d in chunk])
            total += model.compute_losses(batch, TeacherForcing(1.0)).J
    return total


def train(train_corpus: Corpus, dev_corpus: Corpus | None, config: TrainConfig | None = None,
          unlabeled: Corpus | None = None, domains: Sequence[str] | None = None,
          vocab: Vocabulary | None = None, on_epoch: Callable[[dict], None] | None = None) -> tuple[TracingModel, TrainingLog]:
    config = config or TrainConfig()
    config.validate()
    items = [(s, d) for _, d, s in train_corpus.sentences()]
    if not items:
        raise ValueError("train: empty training split")
    dev_items = [(s, d) for _, d, s in dev_corpus.sentences()] if dev_corpus is not None else []
    strategy = config.strategy
    adversarial = strategy.strategy == "ADA"
    if adversarial and unlabeled is None:
        raise ValueError("ADA training needs an unlabeled target corpus")
    target_items = [(s, d) for _, d, s in unlabeled.sentences()] if unlabeled is not None else []
    if any(s.mentions for s, _ in target_items):
        raise AssertionError("target-domain labels leaked into UDA training data")

    if vocab is None:
        vocab = Vocabulary.from_sentences([s for s, _ in items] + [s for s, _ in target_items])
    if domains is None:
        domains = tuple(strategy.domains) or tuple(train_corpus.domains)
    model = TracingModel.init(train_corpus.schema, vocab, config.model, strategy, domains, config.seed)
    params = model.parameters()
    opt = Optimizer(OptimizerConfig(config.optimizer, config.learning_rate))
    tf = TeacherForcing(config.rho, substream(config.seed, "tf"))
    target_rng = substream(config.seed, "target")
    lambda_dom = strategy.lambda_dom if strategy.uses_domain_loss else 0.0
    log = TrainingLog()

    for epoch in range(1, config.epochs + 1):
        epoch_items = items
        if config.augment > 0:
            epoch_items = items + _augmented(items, config.augment, config.max_length,
                                             substream(config.seed, "augment", epoch))
        grl = strategy.grl_coefficient(epoch) if adversarial else None
        sums = dict.fromkeys(("J", "gen", "att", "bol", "dom"), 0.0)
        accs = []
        order = _batches(len(epoch_items), config.batch_size, substream(config.seed, "shuffle", epoch))
        for step, idx in enumerate(order):
            chunk = [epoch_items[i] for i in idx]
            batch = model.make_batch([s for s, _ in chunk], [d for _, d in chunk])
            with Tape():
                losses = model.compute_losses(batch, tf, lambda_dom, grl)
                if adversarial:
                    # the target batch is encoded on its own so lambda_dom = 0 leaves training untouched
                    pick = target_rng.integers(len(target_items), size=min(config.batch_size, len(target_items)))
                    tgt = [target_items[int(i)][0] for i in pick]
                    enc, _ = model.encode([vocab.encode(s.tokens) for s in tgt],
                                          np.zeros(len(tgt), dtype=np.int64))
                    feats = ops.grad_reverse(pooled_features(enc.H, enc.tokens), grl)
                    tgt_loss, tgt_acc = domain_aux_loss(feats, np.full(len(tgt), model.domains.index(
                        strategy.target_domain)), model.heads)
                    losses.dom = losses.dom + tgt_loss
                    losses.domain_accuracy = (losses.domain_accuracy * len(chunk) + tgt_acc * len(tgt)) / (
                        len(chunk) + len(tgt))
                values = losses.as_floats()
                if not all(math.isfinite(v) for v in values.values()):
                    raise TrainingDiverged(
                        f"epoch {epoch} batch {step}: non-finite loss "
                        + " ".join(f"{k}={v!r}" for k, v in values.items()))
                grads = model.backward(losses)
            _clip(grads, config.clip_norm)
            opt.step(params, grads)
            model.zero_grad()
            bad = [p.name for p in params if not np.isfinite(p.data).all()]
            if bad:
                raise TrainingDiverged(f"epoch {epoch} batch {step}: non-finite parameters {bad[:3]} after update")
            for k in sums:
                sums[k] += values[k]
            if losses.domain_accuracy is not None:
                accs.append(losses.domain_accuracy)
        row = {"epoch": epoch, **{k: v / len(order) for k, v in sums.items()},
               "dom_acc": float(np.mean(accs)) if accs else 0.0,
               "dev_J": evaluate_loss(model, dev_items) / max(len(dev_items), 1) if dev_items else 0.0}
        log.rows.append(row)
        if on_epoch:
            on_epoch(row)
    log.gold_picks, log.predicted_picks, log.argmax_calls = tf.gold_picks, tf.predicted_picks, tf.argmax_calls
    return model, log
