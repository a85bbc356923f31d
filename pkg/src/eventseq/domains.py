"""Multi-domain training strategies and adversarial domain adaptation.

Strategies:

* ``SD``   -- train on one domain only.
* ``PD``   -- pool every domain, ignore domain tags.
* ``PDMT`` -- pool, plus an auxiliary domain-classification loss.
* ``MDSP`` -- decoder attends over ``[shared(h); private_domain(h)]``.
* ``ADA``  -- one labeled source, one unlabeled target, domain loss
  through a gradient-reversal layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .autodiff import Parameter, Tensor, ops, xavier_uniform
from .corpus import Corpus, CorpusError

if TYPE_CHECKING:
    from .training import TrainConfig

STRATEGIES = ("SD", "PD", "PDMT", "MDSP", "ADA")


class StrategyError(ValueError):
    pass


@dataclass
class StrategyConfig:
    strategy: str = "PD"
    domains: tuple[str, ...] = ()
    target_domain: str | None = None
    lambda_dom: float = 0.1
    lambda_grl: float = 1.0
    shared_dim: int = 16
    private_dim: int = 16
    classifier_dim: int = 32
    combine: str = "concat"
    grl_schedule: Callable[[int], float] | None = field(default=None, compare=False, repr=False)

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise StrategyError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy == "SD" and len(self.domains) != 1:
            raise StrategyError("SD needs exactly one target domain")
        if self.strategy == "ADA" and (len(self.domains) != 1 or not self.target_domain):
            raise StrategyError("ADA needs exactly one labeled source domain and one unlabeled target domain")
        if self.lambda_dom < 0 or self.lambda_grl < 0:
            raise StrategyError("lambda_dom and lambda_grl must be >= 0")
        if self.combine not in ("concat", "sum"):
            raise StrategyError(f"unknown combine rule {self.combine!r}")
        if self.combine == "sum" and self.shared_dim != self.private_dim:
            raise StrategyError("combine=sum needs shared_dim == private_dim")

    @property
    def uses_domain_loss(self) -> bool:
        return self.strategy in ("PDMT", "ADA")

    def grl_coefficient(self, epoch: int) -> float:
        return self.grl_schedule(epoch) if self.grl_schedule else self.lambda_grl


@dataclass
class DomainHeads:
    """Shared/private feed-forward transforms and a domain classifier."""

    domains: tuple[str, ...]
    shared_W: Parameter | None = None
    shared_b: Parameter | None = None
    private: dict[str, tuple[Parameter, Parameter]] = field(default_factory=dict)
    clf_W1: Parameter | None = None
    clf_b1: Parameter | None = None
    clf_W2: Parameter | None = None
    clf_b2: Parameter | None = None
    combine: str = "concat"

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, cfg: StrategyConfig,
             domains: Sequence[str]) -> "DomainHeads":
        heads = cls(tuple(domains), combine=cfg.combine)
        if cfg.strategy == "MDSP":
            heads.shared_W = Parameter(xavier_uniform(rng, in_dim, cfg.shared_dim), name="mdsp.shared.W")
            heads.shared_b = Parameter(np.zeros(cfg.shared_dim), name="mdsp.shared.b")
            for d in domains:
                heads.private[d] = (
                    Parameter(xavier_uniform(rng, in_dim, cfg.private_dim), name=f"mdsp.private.{d}.W"),
                    Parameter(np.zeros(cfg.private_dim), name=f"mdsp.private.{d}.b"),
                )
        if cfg.uses_domain_loss:
            n_classes = max(len(domains), 2)
            heads.clf_W1 = Parameter(xavier_uniform(rng, in_dim, cfg.classifier_dim), name="dom.clf.W1")
            heads.clf_b1 = Parameter(np.zeros(cfg.classifier_dim), name="dom.clf.b1")
            heads.clf_W2 = Parameter(xavier_uniform(rng, cfg.classifier_dim, n_classes), name="dom.clf.W2")
            heads.clf_b2 = Parameter(np.zeros(n_classes), name="dom.clf.b2")
        return heads

    @property
    def transforms(self) -> bool:
        return self.shared_W is not None

    @property
    def classifies(self) -> bool:
        return self.clf_W1 is not None

    def out_dim(self, in_dim: int) -> int:
        if not self.transforms:
            return in_dim
        shared = self.shared_W.shape[1]
        private = next(iter(self.private.values()))[0].shape[1]
        return shared + private if self.combine == "concat" else shared

    def parameters(self) -> list[Parameter]:
        out = [p for p in (self.shared_W, self.shared_b) if p is not None]
        for d in self.domains:
            if d in self.private:
                out.extend(self.private[d])
        out += [p for p in (self.clf_W1, self.clf_b1, self.clf_W2, self.clf_b2) if p is not None]
        return out

    def transform(self, H: Tensor, domain_ids: np.ndarray) -> Tensor:
        """Replace each row h by ``[shared(h); private_d(h)]`` (or their sum)."""
        if not self.transforms:
            return H
        shared = ops.tanh(H @ self.shared_W + self.shared_b)
        private = None
        for k in sorted(set(int(i) for i in domain_ids)):
            W, b = self.private[self.domains[k]]
            part = ops.tanh(H @ W + b)
            sel = (np.asarray(domain_ids) == k).astype(np.float64)
            if not sel.all():
                part = part * sel.reshape((-1,) + (1,) * (H.ndim - 1))
            private = part if private is None else private + part
        if self.combine == "sum":
            return shared + private
        return ops.concat([shared, private], axis=-1)

    def classify(self, features: Tensor) -> Tensor:
        hidden = ops.tanh(features @ self.clf_W1 + self.clf_b1)
        return hidden @ self.clf_W2 + self.clf_b2


def pooled_features(H: Tensor, token_mask: np.ndarray) -> Tensor:
    """Mean of the token rows of H, sentinels and padding excluded."""
    counts = np.maximum(token_mask.sum(axis=1, keepdims=True), 1.0)
    weights = token_mask / counts
    B, L = token_mask.shape
    return ops.reshape(Tensor(weights.reshape(B, 1, L)) @ H, (B, H.shape[-1]))


def gradient_reversal(features: Tensor, lambda_grl: float) -> Tensor:
    return ops.grad_reverse(features, lambda_grl)


def domain_aux_loss(features: Tensor, domain_labels: np.ndarray, heads: DomainHeads) -> tuple[Tensor, float]:
    """Summed cross-entropy of the domain classifier, and its accuracy."""
    logits = heads.classify(features)
    probs = ops.softmax(logits)
    onehot = np.zeros(probs.shape)
    onehot[np.arange(len(domain_labels)), domain_labels] = 1.0
    loss = ops.mul(ops.sum(ops.mul(ops.log(probs, floor=1e-12), onehot)), -1.0)
    accuracy = float(np.mean(probs.data.argmax(axis=-1) == domain_labels))
    return loss, accuracy


def cross_entropy_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].sum())


@dataclass
class TrainingPlan:
    train: Corpus
    dev: Corpus
    test: Corpus
    config: StrategyConfig
    domains: tuple[str, ...]
    unlabeled: Corpus | None = None
    target_test: Corpus | None = None


def apply_strategy(splits: dict[str, Corpus], config: StrategyConfig) -> TrainingPlan:
    """Filter the splits and fix the domain inventory for a strategy."""
    config.validate()
    known = set()
    for part in splits.values():
        known.update(part.domains)
    for d in tuple(config.domains) + ((config.target_domain,) if config.target_domain else ()):
        if d not in known:
            raise CorpusError(f"unknown domain tag {d!r}; corpus has {sorted(known)}")
    if config.strategy == "SD":
        (d,) = config.domains
        return TrainingPlan(*(splits[k].by_domain(d) for k in ("train", "dev", "test")), config, (d,))
    if config.strategy == "ADA":
        (src,) = config.domains
        tgt = config.target_domain
        unlabeled = strip_labels(splits["train"].by_domain(tgt))
        return TrainingPlan(splits["train"].by_domain(src), splits["dev"].by_domain(src),
                            splits["test"].by_domain(src), config, (src, tgt),
                            unlabeled=unlabeled, target_test=splits["test"].by_domain(tgt))
    domains = tuple(config.domains) or tuple(sorted(known))
    return TrainingPlan(splits["train"], splits["dev"], splits["test"], config, domains)


def strip_labels(corpus: Corpus) -> Corpus:
    from .corpus import Document, Sentence
    docs = tuple(Document(d.id, d.domain, tuple(Sentence(s.tokens) for s in d.sentences)) for d in corpus)
    return Corpus(docs, corpus.schema)


def run_uda(splits: dict[str, Corpus], source: str, target: str, train_config: "TrainConfig",
            width: int = 3, threshold: float | None = None):
    """Train on labeled ``source`` with unlabeled ``target`` text.

    Returns ``(model, log, report)`` where the report holds an
    ``in_domain`` block (source test) and an ``out_of_domain`` block
    (target test).
    """
    from .inference import predict_corpus, tune_threshold
    from .metrics import score
    from .training import train

    cfg = replace(train_config.strategy, strategy="ADA", domains=(source,), target_domain=target)
    plan = apply_strategy(splits, cfg)
    if any(s.mentions for _, _, s in plan.unlabeled.sentences()):
        raise AssertionError("target-domain labels leaked into UDA training data")
    model, log = train(plan.train, plan.dev, replace(train_config, strategy=cfg), unlabeled=plan.unlabeled,
                       domains=plan.domains)
    tau = threshold if threshold is not None else tune_threshold(model, plan.dev, width=width)
    report = {}
    for block, corpus in (("in_domain", plan.test), ("out_of_domain", plan.target_test)):
        preds = predict_corpus(model, corpus, width=width, threshold=tau)
        report[block] = {mode: score(corpus, preds, mode) for mode in ("identification", "classification")}
    return model, log, report
