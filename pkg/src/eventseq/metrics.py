"""Trigger identification and classification scores."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .corpus import Corpus

MODES = ("identification", "classification")
BUCKETS = ("1/1", "1/N")


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class PRF:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "PRF") -> "PRF":
        return PRF(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def _keys(items: Iterable[tuple[str, int, int]], mode: str) -> set:
    if mode == "identification":
        return {(s, e) for _, s, e in items}
    if mode == "classification":
        return {(s, e, t) for t, s, e in items}
    raise EvalError(f"unknown mode {mode!r}; expected one of {MODES}")


def _events(pred) -> tuple:
    return pred.events if hasattr(pred, "events") else tuple(pred)


def _check_ids(gold: Corpus, predictions: Mapping) -> dict:
    known = {sid for sid, _, _ in gold.sentences()}
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise EvalError(f"predictions reference unknown sentence ids: {unknown[:5]}")
    return known


def sentence_counts(gold_items, pred_items, mode: str) -> PRF:
    g, p = _keys(gold_items, mode), _keys(pred_items, mode)
    tp = len(g & p)
    return PRF(tp, len(p) - tp, len(g) - tp)


def _per_sentence(gold: Corpus, predictions: Mapping, mode: str):
    _check_ids(gold, predictions)
    for sid, domain, s in gold.sentences():
        g = [(m.type, m.start, m.end) for m in s.mentions]
        p = _events(predictions[sid]) if sid in predictions else ()
        yield sid, domain, s, sentence_counts(g, p, mode)


def score(gold: Corpus, predictions: Mapping, mode: str = "classification") -> PRF:
    """Micro-averaged exact-span scores; missing sentences count as empty."""
    total = PRF()
    for *_, c in _per_sentence(gold, predictions, mode):
        total = total + c
    return total


def score_by_event_count(gold: Corpus, predictions: Mapping, mode: str = "classification") -> dict[str, PRF]:
    """Scores over sentences with one gold mention (1/1) and several (1/N).

    Sentences without gold mentions add their false positives to both.
    """
    out = {b: PRF() for b in BUCKETS}
    for _, _, s, c in _per_sentence(gold, predictions, mode):
        n = len({(m.start, m.end, m.type) for m in s.mentions})
        if n == 0:
            for b in BUCKETS:
                out[b] = out[b] + c
        else:
            b = "1/1" if n == 1 else "1/N"
            out[b] = out[b] + c
    return out


def score_by_domain(gold: Corpus, predictions: Mapping, mode: str = "classification") -> dict[str, PRF]:
    out: dict[str, PRF] = {d: PRF() for d in gold.domains}
    for _, domain, _, c in _per_sentence(gold, predictions, mode):
        out[domain] = out[domain] + c
    return out


def score_by_type(gold: Corpus, predictions: Mapping) -> dict[str, PRF]:
    tp, fp, fn = Counter(), Counter(), Counter()
    _check_ids(gold, predictions)
    for sid, _, s in gold.sentences():
        g = {(m.start, m.end, m.type) for m in s.mentions}
        p = _keys(_events(predictions[sid]) if sid in predictions else (), "classification")
        for *_, t in g & p:
            tp[t] += 1
        for *_, t in p - g:
            fp[t] += 1
        for *_, t in g - p:
            fn[t] += 1
    types = [t for t in gold.schema.types if tp[t] or fp[t] or fn[t]]
    types += sorted(t for t in set(fp) if t not in gold.schema.types)
    return {t: PRF(tp[t], fp[t], fn[t]) for t in types}


@dataclass
class EvalReport:
    overall: dict[str, PRF] = field(default_factory=dict)
    per_domain: dict[str, dict[str, PRF]] = field(default_factory=dict)
    buckets: dict[str, dict[str, PRF]] = field(default_factory=dict)
    per_type: dict[str, PRF] = field(default_factory=dict)


def evaluate(gold: Corpus, predictions: Mapping) -> EvalReport:
    report = EvalReport()
    for mode in MODES:
        report.overall[mode] = score(gold, predictions, mode)
        for d, c in score_by_domain(gold, predictions, mode).items():
            report.per_domain.setdefault(d, {})[mode] = c
        for b, c in score_by_event_count(gold, predictions, mode).items():
            report.buckets.setdefault(b, {})[mode] = c
    report.per_type = score_by_type(gold, predictions)
    return report
