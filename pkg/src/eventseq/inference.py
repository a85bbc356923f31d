"""Beam-search decoding and attention-threshold trigger tracing."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .autodiff import Tensor, no_record
from .corpus import Corpus, EventSchema, Sentence
from .decoder import DecoderParams, DecoderState, Memory, decode_step
from .encoder import encode_batch

THRESHOLD_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_MAX_LEN = 8


@dataclass
class Hypothesis:
    labels: tuple[int, ...]
    logprob: float
    attention: list[np.ndarray] = field(default_factory=list)
    finished: bool = False

    def names(self, schema: EventSchema) -> list[str]:
        return [schema.labels[i] for i in self.labels]


@dataclass(frozen=True)
class Prediction:
    sentence_id: str
    events: tuple[tuple[str, int, int], ...] = ()

    def to_record(self) -> dict:
        return {"id": self.sentence_id,
                "events": [{"type": t, "start": s, "end": e} for t, s, e in self.events]}


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def beam_search(memory: Memory, params: DecoderParams, schema: EventSchema, width: int,
                max_len: int = DEFAULT_MAX_LEN, mode: str = "select") -> list[Hypothesis]:
    """Finished hypotheses for one sentence, best first.

    Every label except BOS may be expanded. Expansions ending in EOS are
    set aside; beams still open at ``max_len`` are closed with that step's
    EOS log-probability. Scores are plain summed log-probabilities.
    """
    if width < 1:
        raise ValueError(f"beam width must be >= 1, got {width}")
    if max_len < 2:
        raise ValueError(f"max_len must be >= 2, got {max_len}")
    eos, bos = schema.eos_id, schema.bos_id
    finished: list[Hypothesis] = []
    live = [Hypothesis((), 0.0)]
    state = DecoderState.initial(1, params)
    with no_record():
        for t in range(1, max_len + 1):
            prev = np.array([h.labels[-1] if h.labels else bos for h in live])
            step = decode_step(state, prev, memory, params, mode=mode, with_probs=False)
            logp = _log_softmax(step.logits.data)
            att = step.alpha_hat.data
            if t == max_len:
                for k, h in enumerate(live):
                    finished.append(Hypothesis(h.labels + (eos,), h.logprob + float(logp[k, eos]),
                                               h.attention + [att[k]], True))
                break
            scores = np.array([h.logprob for h in live])[:, None] + logp
            scores[:, bos] = -np.inf
            flat = np.argsort(-scores, axis=None, kind="stable")[:width]
            keep = []
            for f in flat:
                k, v = divmod(int(f), scores.shape[1])
                if not np.isfinite(scores[k, v]):
                    continue
                h = live[k]
                new = Hypothesis(h.labels + (v,), float(scores[k, v]), h.attention + [att[k]], v == eos)
                if v == eos:
                    finished.append(new)
                else:
                    keep.append((k, new))
            if not keep:
                break
            live = [h for _, h in keep]
            state = step.state.take(np.array([k for k, _ in keep]))
    finished.sort(key=lambda h: -h.logprob)
    return finished


def _identity(scores: np.ndarray) -> np.ndarray:
    return scores


def trace_span(token_attention: np.ndarray, threshold: float,
               aggregate: Callable[[np.ndarray], np.ndarray] = _identity) -> tuple[int, int]:
    """Trigger span ``(start, end)`` from token-level attention.

    Tokens scoring above ``threshold`` are candidates. A single run of
    candidates is taken as is; with several runs the one with the largest
    summed weight wins (leftmost on ties); with none, the argmax token.
    ``aggregate`` maps sub-token scores onto tokens and is the identity
    for atomic tokens.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    a = aggregate(np.asarray(token_attention, dtype=np.float64))
    cand = a > threshold
    if not cand.any():
        i = int(a.argmax())
        return i, i + 1
    best, best_mass = None, -np.inf
    i, n = 0, len(a)
    while i < n:
        if cand[i]:
            j = i
            while j < n and cand[j]:
                j += 1
            mass = float(a[i:j].sum())
            if mass > best_mass:
                best, best_mass = (i, j), mass
            i = j
        else:
            i += 1
    return best


def trace_triggers(hypothesis: Hypothesis, threshold: float, schema: EventSchema, length: int,
                   sentence_id: str = "") -> Prediction:
    """Attach a trigger span to every event label of ``hypothesis``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    events = []
    skip = {schema.none_id, schema.eos_id, schema.bos_id}
    for lab, att in zip(hypothesis.labels, hypothesis.attention):
        if lab in skip:
            continue
        start, end = trace_span(att[1:length + 1], threshold)
        events.append((schema.labels[lab], start, end))
    return Prediction(sentence_id, tuple(events))


def _domain_ids(model, domains: Sequence[str | None]) -> np.ndarray:
    return np.array([model.domain_index(d) for d in domains], dtype=np.int64)


def decode_sentences(model, sentences: Sequence[Sentence], domains: Sequence[str | None] | None = None,
                     width: int = 3, max_len: int = DEFAULT_MAX_LEN, chunk: int = 64) -> list[Hypothesis | None]:
    """Top beam hypothesis per sentence; ``None`` for an empty sentence."""
    domains = list(domains) if domains is not None else [None] * len(sentences)
    out: list[Hypothesis | None] = []
    with no_record():
        for i in range(0, len(sentences), chunk):
            part = sentences[i:i + chunk]
            ids = [model.vocab.encode(s.tokens) for s in part]
            enc = encode_batch(ids, model.encoder)
            H = model.heads.transform(enc.H, _domain_ids(model, domains[i:i + chunk]))
            keys = H.data @ model.decoder.W_a.data
            for b, s in enumerate(part):
                rows = len(s.tokens) + 2
                mem = Memory(Tensor(H.data[b:b + 1, :rows]), Tensor(keys[b:b + 1, :rows]))
                hyps = beam_search(mem, model.decoder, model.schema, width, max_len, model.config.mask_mode)
                out.append(hyps[0] if hyps else None)
    return out


def predict(sentence: Sentence, model, width: int = 3, threshold: float = 0.3, domain: str | None = None,
            max_len: int = DEFAULT_MAX_LEN, sentence_id: str = "") -> Prediction:
    (hyp,) = decode_sentences(model, [sentence], [domain], width, max_len)
    if hyp is None:
        return Prediction(sentence_id)
    return trace_triggers(hyp, threshold, model.schema, len(sentence.tokens), sentence_id)


def _corpus_hypotheses(model, corpus: Corpus, width: int, max_len: int):
    rows = list(corpus.sentences())
    hyps = decode_sentences(model, [s for _, _, s in rows], [d for _, d, _ in rows], width, max_len)
    return rows, hyps


def _trace_all(model, rows, hyps, threshold: float) -> dict[str, Prediction]:
    out = {}
    for (sid, _, s), h in zip(rows, hyps):
        out[sid] = Prediction(sid) if h is None else trace_triggers(h, threshold, model.schema, len(s.tokens), sid)
    return out


def predict_corpus(model, corpus: Corpus, width: int = 3, threshold: float = 0.3,
                   max_len: int = DEFAULT_MAX_LEN) -> dict[str, Prediction]:
    rows, hyps = _corpus_hypotheses(model, corpus, width, max_len)
    return _trace_all(model, rows, hyps, threshold)


def threshold_scan(model, dev: Corpus, mode: str = "classification", width: int = 3,
                   max_len: int = DEFAULT_MAX_LEN, grid: Sequence[float] = THRESHOLD_GRID) -> dict[float, float]:
    """Dev F1 for every grid threshold; beams are decoded once and reused."""
    from .metrics import score

    rows, hyps = _corpus_hypotheses(model, dev, width, max_len)
    return {tau: score(dev, _trace_all(model, rows, hyps, tau), mode).f1 for tau in grid}


def tune_threshold(model, dev: Corpus, mode: str = "classification", width: int = 3,
                   max_len: int = DEFAULT_MAX_LEN, grid: Sequence[float] = THRESHOLD_GRID) -> float:
    scan = threshold_scan(model, dev, mode, width, max_len, grid)
    return select_threshold(scan)


def select_threshold(scan: Mapping[float, float]) -> float:
    """Best-scoring threshold, smallest one on ties."""
    best = max(scan.values())
    return min(tau for tau, f in scan.items() if f == best)


# -- prediction files -------------------------------------------------------------

def dumps_predictions(predictions: Iterable[Prediction]) -> str:
    return "".join(json.dumps(p.to_record(), ensure_ascii=False) + "\n" for p in predictions)


def save_predictions(predictions: Mapping[str, Prediction] | Iterable[Prediction], path: str | Path) -> None:
    items = predictions.values() if isinstance(predictions, Mapping) else predictions
    Path(path).write_text(dumps_predictions(items), encoding="utf-8")


def parse_predictions(lines: Iterable[str]) -> dict[str, Prediction]:
    out = {}
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            events = tuple((str(e["type"]), int(e["start"]), int(e["end"])) for e in rec["events"])
            pred = Prediction(str(rec["id"]), events)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: malformed prediction ({exc})") from None
        if pred.sentence_id in out:
            raise ValueError(f"line {lineno}: duplicate sentence id {pred.sentence_id!r}")
        out[pred.sentence_id] = pred
    return out


def load_predictions(path: str | Path) -> dict[str, Prediction]:
    with open(path, encoding="utf-8") as fh:
        return parse_predictions(fh)


def gold_predictions(corpus: Corpus) -> dict[str, Prediction]:
    """Gold mentions written as predictions, for sanity checks."""
    return {sid: Prediction(sid, tuple((m.type, m.start, m.end) for m in s.mentions))
            for sid, _, s in corpus.sentences()}


__all__ = [
    "DEFAULT_MAX_LEN", "Hypothesis", "Prediction", "THRESHOLD_GRID", "beam_search",
    "decode_sentences", "gold_predictions", "load_predictions", "parse_predictions", "predict",
    "predict_corpus", "save_predictions", "select_threshold", "threshold_scan", "trace_span",
    "trace_triggers", "tune_threshold",
]
