"""Deterministic synthetic event corpora.

Each event type owns a small lexicon of 1-3 token trigger lexemes, disjoint
from every other type and from the distractor vocabulary. Sentences are
filled with distractor tokens around the placed triggers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import DEFAULT_SCHEMA, Corpus, Document, EventSchema, Mention, Sentence
from .rng import substream

DEFAULT_DOMAINS = ("review", "text_conv", "phone_conv")


class SynthSpecError(ValueError):
    pass


@dataclass
class DomainProfile:
    name: str
    num_docs: int
    type_weights: tuple[float, ...]
    eventless_proportion: float = 0.3
    sentences_per_doc: tuple[int, int] = (1, 2)
    private_distractors: int = 0


@dataclass
class SynthSpec:
    domains: list[DomainProfile]
    schema: EventSchema = DEFAULT_SCHEMA
    multi_event_proportion: float = 0.35
    trigger_vocab: int = 200
    distractor_vocab: int = 200
    lexemes_per_type: int = 3
    lexeme_length_weights: tuple[float, ...] = (0.6, 0.25, 0.15)
    sentence_length: tuple[int, int] = (6, 14)
    max_events: int = 3

    def validate(self) -> None:
        if not self.domains:
            raise SynthSpecError("at least one domain required")
        m = len(self.schema.types)
        for d in self.domains:
            if d.num_docs <= 0:
                raise SynthSpecError(f"domain {d.name}: num_docs must be positive")
            w = np.asarray(d.type_weights, dtype=float)
            if w.shape != (m,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise SynthSpecError(f"domain {d.name}: type frequencies must be {m} non-negative values summing to 1")
            if not 0 <= d.eventless_proportion < 1:
                raise SynthSpecError(f"domain {d.name}: eventless_proportion must be in [0, 1)")
            lo, hi = d.sentences_per_doc
            if not 1 <= lo <= hi:
                raise SynthSpecError(f"domain {d.name}: bad sentences_per_doc {d.sentences_per_doc}")
        if not 0 <= self.multi_event_proportion <= 1:
            raise SynthSpecError("multi_event_proportion must be in [0, 1]")
        lo, hi = self.sentence_length
        if not 1 <= lo <= hi:
            raise SynthSpecError(f"bad sentence_length {self.sentence_length}")
        if self.trigger_vocab <= 0 or self.distractor_vocab <= 0 or self.lexemes_per_type <= 0:
            raise SynthSpecError("vocabulary sizes and lexemes_per_type must be positive")
        if self.max_events < 2 and self.multi_event_proportion > 0:
            raise SynthSpecError("max_events must be >= 2 for multi-event sentences")
        lw = np.asarray(self.lexeme_length_weights, dtype=float)
        if len(lw) > 3 or np.any(lw < 0) or lw.sum() <= 0:
            raise SynthSpecError("lexeme_length_weights: up to 3 non-negative weights")
        worst = m * self.lexemes_per_type * len(lw)
        if worst > self.trigger_vocab:
            raise SynthSpecError(
                f"trigger lexicon needs up to {worst} tokens but trigger_vocab is {self.trigger_vocab}")


def default_type_weights(schema: EventSchema, favored: range, boost: float = 4.0) -> tuple[float, ...]:
    w = np.array([1.0 + boost * (j in favored) for j in range(len(schema.types))])
    return tuple(w / w.sum())


def default_spec(num_docs: int = 400, schema: EventSchema = DEFAULT_SCHEMA,
                 multi_event_proportion: float = 0.35, **kwargs) -> SynthSpec:
    """Three domains, each over-representing a different third of the types."""
    m = len(schema.types)
    thirds = [range(k * m // 3, (k + 1) * m // 3) for k in range(3)]
    domains = [
        DomainProfile(name, num_docs, default_type_weights(schema, fav))
        for name, fav in zip(DEFAULT_DOMAINS, thirds)
    ]
    return SynthSpec(domains=domains, schema=schema, multi_event_proportion=multi_event_proportion, **kwargs)


@dataclass
class Lexicon:
    by_type: dict[str, list[tuple[str, ...]]] = field(default_factory=dict)
    distractors: list[str] = field(default_factory=list)

    def lexeme_type(self, lexeme: tuple[str, ...]) -> str | None:
        for t, lexemes in self.by_type.items():
            if lexeme in lexemes:
                return t
        return None


def build_lexicon(spec: SynthSpec, seed: int) -> Lexicon:
    rng = substream(seed, "synth-lexicon")
    pool = [f"k{i}" for i in rng.permutation(spec.trigger_vocab)]
    lw = np.asarray(spec.lexeme_length_weights, dtype=float)
    lw = lw / lw.sum()
    lex = Lexicon(distractors=[f"w{i}" for i in range(spec.distractor_vocab)])
    cursor = 0
    for t in spec.schema.types:
        items = []
        for _ in range(spec.lexemes_per_type):
            k = int(rng.choice(len(lw), p=lw)) + 1
            items.append(tuple(pool[cursor:cursor + k]))
            cursor += k
        lex.by_type[t] = items
    return lex


def _gaps(rng: np.random.Generator, filler: int, k: int) -> list[int]:
    """Split ``filler`` tokens into k+1 gaps, interior gaps at least one."""
    inner = k - 1
    free = filler - inner
    cuts = np.sort(rng.integers(0, free + 1, size=k))
    edges = np.concatenate([[0], cuts, [free]])
    gaps = list(np.diff(edges).astype(int))
    for i in range(1, k):
        gaps[i] += 1
    return gaps


def _sentence(rng: np.random.Generator, spec: SynthSpec, profile: DomainProfile,
              lex: Lexicon, distractors: list[str]) -> Sentence:
    types = spec.schema.types
    n_events = 0
    if rng.random() >= profile.eventless_proportion:
        n_events = 1
        if rng.random() < spec.multi_event_proportion:
            n_events = int(rng.integers(2, spec.max_events + 1))
    chosen = []
    for _ in range(n_events):
        t = types[int(rng.choice(len(types), p=profile.type_weights))]
        lexemes = lex.by_type[t]
        chosen.append((t, lexemes[int(rng.integers(len(lexemes)))]))
    lo, hi = spec.sentence_length
    length = int(rng.integers(lo, hi + 1))
    trig = sum(len(x) for _, x in chosen)
    length = max(length, trig + max(n_events - 1, 0))
    filler = length - trig
    tokens: list[str] = []
    mentions = []
    if n_events == 0:
        tokens = [distractors[int(i)] for i in rng.integers(len(distractors), size=length)]
        return Sentence(tuple(tokens))
    gaps = _gaps(rng, filler, n_events)
    for i, (t, lexeme) in enumerate(chosen):
        tokens += [distractors[int(j)] for j in rng.integers(len(distractors), size=gaps[i])]
        mentions.append(Mention(len(tokens), len(tokens) + len(lexeme), t))
        tokens += list(lexeme)
    tokens += [distractors[int(j)] for j in rng.integers(len(distractors), size=gaps[-1])]
    return Sentence(tuple(tokens), tuple(mentions))


def generate_synthetic_corpus(seed: int, spec: SynthSpec | None = None) -> tuple[Corpus, Lexicon]:
    spec = spec or default_spec()
    spec.validate()
    lex = build_lexicon(spec, seed)
    docs = []
    for d_idx, profile in enumerate(spec.domains):
        rng = substream(seed, "synth-docs", d_idx)
        distractors = lex.distractors + [f"{profile.name}_w{i}" for i in range(profile.private_distractors)]
        lo, hi = profile.sentences_per_doc
        for k in range(profile.num_docs):
            n_sent = int(rng.integers(lo, hi + 1))
            sents = tuple(_sentence(rng, spec, profile, lex, distractors) for _ in range(n_sent))
            docs.append(Document(f"{profile.name}-{k:05d}", profile.name, sents))
    return Corpus(tuple(docs), spec.schema), lex
