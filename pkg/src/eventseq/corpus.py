"""Event-annotated multi-domain corpora.

A corpus file holds one JSON document per line::

    {"id": "d1", "domain": "review",
     "sentences": [{"tokens": ["a", "b"], "mentions": [{"start": 0, "end": 1, "type": "Cold"}]}]}

Spans are token offsets, end-exclusive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .rng import substream

DEFAULT_EVENT_TYPES = (
    "Additives", "Contraband", "Harmful-residues", "Poor-environment", "Recycled-material",
    "Inconsistent-product", "Fake", "Low-quality", "Non-compliant", "Poor-packaging",
    "Unreliable-product", "Damaged", "Steal", "Spoiled", "Undercooked", "Cold", "Expired",
    "Thaw", "Impurities", "Uncomfortable", "Abnormalities",
)
NONE, EOS, BOS = "None", "EOS", "BOS"
RESERVED_LABELS = (NONE, EOS, BOS)


class CorpusError(ValueError):
    """A corpus file or object violates the data model."""


@dataclass(frozen=True)
class EventSchema:
    """Domain event types followed by the reserved labels None, EOS, BOS."""

    types: tuple[str, ...] = DEFAULT_EVENT_TYPES

    def __post_init__(self):
        types = tuple(self.types)
        object.__setattr__(self, "types", types)
        if len(set(types)) != len(types):
            raise CorpusError("event schema: duplicate type names")
        clash = set(types) & set(RESERVED_LABELS)
        if clash:
            raise CorpusError(f"event schema: reserved label used as a type: {sorted(clash)}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.labels)})

    @property
    def labels(self) -> tuple[str, ...]:
        return self.types + RESERVED_LABELS

    @property
    def num_labels(self) -> int:
        return len(self.types) + len(RESERVED_LABELS)

    def label_id(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise CorpusError(f"unknown label {name!r}") from None

    @property
    def none_id(self) -> int:
        return self._index[NONE]

    @property
    def eos_id(self) -> int:
        return self._index[EOS]

    @property
    def bos_id(self) -> int:
        return self._index[BOS]


DEFAULT_SCHEMA = EventSchema()


@dataclass(frozen=True, order=True)
class Mention:
    start: int
    end: int
    type: str

    @property
    def span(self) -> tuple[int, int]:
        return self.start, self.end

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    mentions: tuple[Mention, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "mentions", tuple(self.mentions))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Document:
    id: str
    domain: str
    sentences: tuple[Sentence, ...]

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    schema: EventSchema = DEFAULT_SCHEMA

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    @property
    def domains(self) -> list[str]:
        """Domain tags in order of first appearance."""
        return list(dict.fromkeys(d.domain for d in self.documents))

    def sentences(self) -> Iterator[tuple[str, str, Sentence]]:
        """Yield ``(sentence_id, domain, sentence)`` in file order."""
        for doc in self.documents:
            for i, s in enumerate(doc.sentences):
                yield sentence_id(doc.id, i), doc.domain, s

    def subset(self, ids: Iterable[str]) -> "Corpus":
        wanted = set(ids)
        return Corpus(tuple(d for d in self.documents if d.id in wanted), self.schema)

    def by_domain(self, domain: str) -> "Corpus":
        return Corpus(tuple(d for d in self.documents if d.domain == domain), self.schema)


def sentence_id(doc_id: str, index: int) -> str:
    return f"{doc_id}#{index}"


# -- validation & I/O ---------------------------------------------------------

def validate_sentence(sentence: Sentence, schema: EventSchema, where: str) -> None:
    n = len(sentence.tokens)
    seen = set()
    for m in sentence.mentions:
        if m.type in RESERVED_LABELS:
            raise CorpusError(f"{where}: mention uses reserved label {m.type!r}")
        if m.type not in schema.types:
            raise CorpusError(f"{where}: unknown event type {m.type!r}")
        if not (0 <= m.start < m.end <= n):
            raise CorpusError(f"{where}: span ({m.start}, {m.end}) out of bounds for length {n}")
        if m in seen:
            raise CorpusError(f"{where}: duplicate mention {m}")
        seen.add(m)


def validate_corpus(corpus: Corpus) -> Corpus:
    ids = set()
    for doc in corpus.documents:
        if doc.id in ids:
            raise CorpusError(f"document {doc.id!r}: duplicate id")
        ids.add(doc.id)
        if not doc.domain:
            raise CorpusError(f"document {doc.id!r}: empty domain")
        for i, s in enumerate(doc.sentences):
            validate_sentence(s, corpus.schema, f"document {doc.id!r} sentence {i}")
    return corpus


def document_from_record(rec: dict) -> Document:
    sentences = []
    for s in rec["sentences"]:
        mentions = tuple(Mention(int(m["start"]), int(m["end"]), str(m["type"])) for m in s.get("mentions", ()))
        sentences.append(Sentence(tuple(str(t) for t in s["tokens"]), mentions))
    return Document(str(rec["id"]), str(rec["domain"]), tuple(sentences))


def document_to_record(doc: Document) -> dict:
    return {
        "id": doc.id,
        "domain": doc.domain,
        "sentences": [
            {"tokens": list(s.tokens),
             "mentions": [{"start": m.start, "end": m.end, "type": m.type} for m in s.mentions]}
            for s in doc.sentences
        ],
    }


def parse_corpus(lines: Iterable[str], schema: EventSchema = DEFAULT_SCHEMA) -> Corpus:
    docs = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            doc = document_from_record(rec)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"line {lineno}: malformed record ({exc})") from None
        docs.append(doc)
    return validate_corpus(Corpus(tuple(docs), schema))


def load_corpus(path: str | Path, schema: EventSchema = DEFAULT_SCHEMA) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, schema)


def dumps_corpus(corpus: Corpus) -> str:
    return "".join(json.dumps(document_to_record(d), ensure_ascii=False) + "\n" for d in corpus.documents)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(dumps_corpus(corpus), encoding="utf-8")


# -- splitting -----------------------------------------------------------------

def split_corpus(corpus: Corpus, seed: int) -> dict[str, Corpus]:
    """Random document-level 8:1:1 partition.

    Sizes are floor(0.8n), floor(0.1n) and the remainder; each part keeps
    the original document order.
    """
    n = len(corpus)
    if n < 10:
        raise CorpusError(f"split needs at least 10 documents, got {n}")
    perm = substream(seed, "split").permutation(n)
    n_train, n_dev = (8 * n) // 10, n // 10
    parts = {"train": perm[:n_train], "dev": perm[n_train:n_train + n_dev], "test": perm[n_train + n_dev:]}
    return {k: Corpus(tuple(corpus.documents[i] for i in sorted(idx)), corpus.schema) for k, idx in parts.items()}


def split_manifest(splits: dict[str, Corpus], seed: int) -> dict:
    return {**{k: [d.id for d in splits[k].documents] for k in ("train", "dev", "test")}, "seed": seed}


def apply_manifest(corpus: Corpus, manifest: dict) -> dict[str, Corpus]:
    known = {d.id for d in corpus.documents}
    out = {}
    for k in ("train", "dev", "test"):
        missing = [i for i in manifest[k] if i not in known]
        if missing:
            raise CorpusError(f"split manifest: unknown document ids in {k}: {missing[:5]}")
        out[k] = corpus.subset(manifest[k])
    return out


# -- decoding targets ------------------------------------------------------------

@dataclass(frozen=True)
class DecodingTarget:
    """Label sequence plus gold attention for one sentence.

    Attention positions index encoder rows: row 0 is the head sentinel,
    token ``i`` is row ``i + 1`` and row ``n + 1`` is the tail sentinel.
    ``attention_index`` is the single row used for teacher forcing;
    ``attention_rows`` lists every row carrying gold attention mass.
    """

    labels: tuple[str, ...]
    attention_index: tuple[int, ...]
    attention_rows: tuple[tuple[int, ...], ...]
    spans: tuple[tuple[int, int] | None, ...]
    length: int

    def __len__(self) -> int:
        return len(self.labels)

    def attention_distribution(self) -> np.ndarray:
        """Gold attention, uniform over each step's trigger tokens."""
        out = np.zeros((len(self.labels), self.length + 2))
        for t, rows in enumerate(self.attention_rows):
            out[t, list(rows)] = 1.0 / len(rows)
        return out

    def bag(self) -> set[str]:
        return {lab for lab in self.labels if lab not in (EOS, BOS)}


def ordered_mentions(sentence: Sentence) -> list[Mention]:
    return sorted(sentence.mentions, key=lambda m: (m.start, m.end, m.type))


def build_decoding_target(sentence: Sentence) -> DecodingTarget:
    n = len(sentence.tokens)
    tail = n + 1
    mentions = ordered_mentions(sentence)
    if not mentions:
        return DecodingTarget((NONE, EOS), (tail, tail), ((tail,), (tail,)), (None, None), n)
    labels = tuple(m.type for m in mentions) + (EOS,)
    index = tuple(m.start + 1 for m in mentions) + (tail,)
    rows = tuple(tuple(range(m.start + 1, m.end + 1)) for m in mentions) + ((tail,),)
    spans = tuple(m.span for m in mentions) + (None,)
    return DecodingTarget(labels, index, rows, spans, n)


def augment_concat(s1: Sentence, s2: Sentence, max_length: int | None = None) -> Sentence:
    """Concatenate two sentences, shifting the second one's mentions."""
    total = len(s1.tokens) + len(s2.tokens)
    if max_length is not None and total > max_length:
        raise CorpusError(f"augmented sentence length {total} exceeds maximum {max_length}")
    shift = len(s1.tokens)
    moved = tuple(Mention(m.start + shift, m.end + shift, m.type) for m in s2.mentions)
    return Sentence(s1.tokens + s2.tokens, s1.mentions + moved)
