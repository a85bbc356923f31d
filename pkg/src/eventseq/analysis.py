"""Corpus analytics: type distributions, heterogeneity, agreement, trigger statistics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, CorpusError

LENGTH_BUCKETS = ("1-2", "3-4", "5+")


def type_distribution(corpus: Corpus, domain: str) -> np.ndarray:
    """Relative frequency of each event type in ``domain``, schema order."""
    index = {t: j for j, t in enumerate(corpus.schema.types)}
    counts = np.zeros(len(index))
    for _, d, s in corpus.sentences():
        if d == domain:
            for m in s.mentions:
                counts[index[m.type]] += 1
    if counts.sum() == 0:
        raise CorpusError(f"domain {domain!r} has no event mentions")
    return counts / counts.sum()


def wasserstein(p: Sequence[float], q: Sequence[float]) -> float:
    """1-D earth mover's distance with ground metric |i - j| on type indices."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"wasserstein: distributions must be 1-D and equally long, got {p.shape} and {q.shape}")
    return float(np.abs(np.cumsum(p) - np.cumsum(q)).sum())


def average_wasserstein(distributions: Sequence[Sequence[float]]) -> float:
    """Mean pairwise distance divided by the number of types."""
    if len(distributions) < 2:
        raise ValueError("average Wasserstein distance needs at least two domains")
    num_types = len(distributions[0])
    pairs = list(combinations(range(len(distributions)), 2))
    total = sum(wasserstein(distributions[i], distributions[j]) for i, j in pairs)
    return total / num_types / len(pairs)


def avg_wasserstein(corpus: Corpus) -> float:
    return average_wasserstein([type_distribution(corpus, d) for d in corpus.domains])


def cohen_kappa(a: Sequence, b: Sequence) -> float:
    if len(a) != len(b):
        raise ValueError(f"cohen_kappa: annotation lengths differ ({len(a)} vs {len(b)})")
    if not a:
        raise ValueError("cohen_kappa: no items")
    n = len(a)
    p_o = sum(x == y for x, y in zip(a, b)) / n
    ca, cb = Counter(a), Counter(b)
    p_e = sum(ca[c] * cb[c] for c in ca) / (n * n)
    if p_e >= 1.0:
        raise ValueError("cohen_kappa: undefined when chance agreement is 1")
    return (p_o - p_e) / (1.0 - p_e)


@dataclass
class CorpusStats:
    trigger_lengths: dict[str, int]
    multi_event_proportion: float
    multi_event_proportion_all: float
    density: dict[str, float]
    density_std: float
    sentence_length: dict[str, float]
    sentence_length_std: float
    sentences: int = 0
    mentions: int = 0

    def trigger_length_shares(self) -> dict[str, float]:
        total = sum(self.trigger_lengths.values())
        return {k: (v / total if total else 0.0) for k, v in self.trigger_lengths.items()}


def _bucket(length: int) -> str:
    return "1-2" if length <= 2 else "3-4" if length <= 4 else "5+"


def corpus_stats(corpus: Corpus) -> CorpusStats:
    lengths = dict.fromkeys(LENGTH_BUCKETS, 0)
    evented = multi = total = mentions = 0
    per_domain: dict[str, list[int]] = {d: [0, 0, 0] for d in corpus.domains}  # sentences, mentions, tokens
    for _, d, s in corpus.sentences():
        total += 1
        k = len(s.mentions)
        mentions += k
        evented += k >= 1
        multi += k >= 2
        for m in s.mentions:
            lengths[_bucket(len(m))] += 1
        row = per_domain[d]
        row[0] += 1
        row[1] += k
        row[2] += len(s.tokens)
    density = {d: (m / n if n else 0.0) for d, (n, m, _) in per_domain.items()}
    sent_len = {d: (t / n if n else 0.0) for d, (n, _, t) in per_domain.items()}
    # population standard deviation across domains
    return CorpusStats(
        trigger_lengths=lengths,
        multi_event_proportion=multi / evented if evented else 0.0,
        multi_event_proportion_all=multi / total if total else 0.0,
        density=density,
        density_std=float(np.std(list(density.values()))) if density else 0.0,
        sentence_length=sent_len,
        sentence_length_std=float(np.std(list(sent_len.values()))) if sent_len else 0.0,
        sentences=total,
        mentions=mentions,
    )


@dataclass
class HeterogeneityReport:
    distributions: dict[str, np.ndarray]
    pairwise: dict[tuple[str, str], float]
    average_wasserstein: float
    density: dict[str, float] = field(default_factory=dict)
    density_std: float = 0.0


def heterogeneity(corpus: Corpus) -> HeterogeneityReport:
    domains = corpus.domains
    dists = {d: type_distribution(corpus, d) for d in domains}
    pairwise = {(a, b): wasserstein(dists[a], dists[b]) for a, b in combinations(domains, 2)}
    stats = corpus_stats(corpus)
    avg = average_wasserstein([dists[d] for d in domains]) if len(domains) >= 2 else 0.0
    return HeterogeneityReport(dists, pairwise, avg, stats.density, stats.density_std)


# -- word / trigger mismatch ---------------------------------------------------------

MISMATCH_CLASSES = ("regular", "cross-word", "inside-word")


def parse_segmentation(lines: Iterable[str]) -> list[list[str]]:
    return [line.rstrip("\n").split("/") if line.strip() else [] for line in lines]


def load_segmentation(path: str | Path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return parse_segmentation(fh)


def word_spans(tokens: Sequence[str], words: Sequence[str], where: str = "") -> list[tuple[int, int]]:
    """Token span of each word; word edges must fall on token edges."""
    spans, i = [], 0
    for w in words:
        start, text = i, ""
        while len(text) < len(w) and i < len(tokens):
            text += tokens[i]
            i += 1
        if text != w or not w:
            raise CorpusError(f"{where}segmentation does not match the sentence tokens at word {w!r}")
        spans.append((start, i))
    if i != len(tokens):
        raise CorpusError(f"{where}segmentation does not cover the sentence ({i} of {len(tokens)} tokens)")
    return spans


def classify_mention(span: tuple[int, int], words: Sequence[tuple[int, int]]) -> str:
    start, end = span
    hit = [(a, b) for a, b in words if a < end and start < b]
    if len(hit) >= 2:
        return "cross-word"
    (a, b), = hit
    return "regular" if (a, b) == (start, end) else "inside-word"


def word_trigger_mismatch(corpus: Corpus, segmentation: Sequence[Sequence[str]]) -> dict[str, float]:
    """Percentage of mentions in each mismatch class."""
    rows = list(corpus.sentences())
    if len(segmentation) != len(rows):
        raise CorpusError(f"segmentation has {len(segmentation)} lines for {len(rows)} sentences")
    counts = dict.fromkeys(MISMATCH_CLASSES, 0)
    for (sid, _, s), words in zip(rows, segmentation):
        spans = word_spans(s.tokens, words, f"sentence {sid}: ")
        for m in s.mentions:
            counts[classify_mention(m.span, spans)] += 1
    total = sum(counts.values())
    return {k: (100.0 * v / total if total else 0.0) for k, v in counts.items()}
