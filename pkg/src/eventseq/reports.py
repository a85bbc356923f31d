"""Plain key-value report files with bracketed sections."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .analysis import CorpusStats, HeterogeneityReport
from .metrics import PRF, EvalReport


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    return str(value)


class Report:
    def __init__(self):
        self.sections: list[tuple[str, list[tuple[str, str]]]] = []

    def section(self, name: str, items: Iterable[tuple[str, object]] = ()) -> list:
        rows = [(k, fmt(v)) for k, v in items]
        self.sections.append((name, rows))
        return rows

    def config(self, text: str) -> None:
        rows = self.section("config")
        current = ""
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("["):
                current = line.strip("[]")
            elif "=" in line:
                k, _, v = line.partition("=")
                rows.append((f"{current}.{k.strip()}", v.strip()))

    def dumps(self) -> str:
        out = []
        for name, rows in self.sections:
            out.append(f"[{name}]")
            out += [f"{k} = {v}" for k, v in rows]
            out.append("")
        return "\n".join(out)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def prf_items(prefix: str, c: PRF) -> list[tuple[str, object]]:
    return [(f"{prefix}.precision", c.precision), (f"{prefix}.recall", c.recall), (f"{prefix}.f1", c.f1),
            (f"{prefix}.tp", c.tp), (f"{prefix}.fp", c.fp), (f"{prefix}.fn", c.fn)]


def add_eval(report: Report, ev: EvalReport, title: str = "overall") -> None:
    report.section(title, [kv for mode, c in ev.overall.items() for kv in prf_items(mode, c)])
    for d, modes in ev.per_domain.items():
        report.section(f"domain {d}", [kv for mode, c in modes.items() for kv in prf_items(mode, c)])
    for b, modes in ev.buckets.items():
        report.section(f"bucket {b}", [kv for mode, c in modes.items() for kv in prf_items(mode, c)])
    report.section("per_type", [kv for t, c in ev.per_type.items() for kv in prf_items(t, c)])


def add_stats(report: Report, stats: CorpusStats, het: HeterogeneityReport | None, types: Iterable[str]) -> None:
    shares = stats.trigger_length_shares()
    report.section("corpus", [("sentences", stats.sentences), ("mentions", stats.mentions),
                              ("multi_event_proportion", stats.multi_event_proportion),
                              ("multi_event_proportion_all_sentences", stats.multi_event_proportion_all)])
    report.section("trigger_length", [kv for k in stats.trigger_lengths
                                      for kv in ((f"{k}.count", stats.trigger_lengths[k]), (f"{k}.share", shares[k]))])
    report.section("density", [*stats.density.items(), ("std", stats.density_std)])
    report.section("sentence_length", [*stats.sentence_length.items(), ("std", stats.sentence_length_std)])
    if het is None:
        return
    types = list(types)
    for d, dist in het.distributions.items():
        report.section(f"type_distribution {d}", zip(types, dist))
    report.section("wasserstein", [*((f"{a}|{b}", w) for (a, b), w in het.pairwise.items()),
                                   ("average", het.average_wasserstein)])


def add_mapping(report: Report, name: str, values: Mapping) -> None:
    report.section(name, values.items())
