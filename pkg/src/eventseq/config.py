"""Run configuration: an INI file with sections, overridable from the command line."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from .domains import STRATEGIES, StrategyConfig
from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, message: str, keys: Iterable[str] = ()):
        self.keys = sorted(set(keys))
        super().__init__(message + (f" [keys: {', '.join(self.keys)}]" if self.keys else ""))


def _optional_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


def _threshold(text: str) -> str | float:
    text = text.strip().lower()
    return "tune" if text == "tune" else float(text)


def _domains(text: str) -> tuple[str, ...]:
    return tuple(d.strip() for d in text.split(",") if d.strip())


def _text(text: str) -> str:
    return text.strip()


def _optional_text(text: str) -> str | None:
    text = text.strip()
    return text or None


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "run": {
        "seed": (int, 13),
        "corpus": (_text, "corpus.jsonl"),
        "splits": (_text, "splits.json"),
        "checkpoint": (_text, "model.npz"),
        "log": (_text, "train_log.tsv"),
        "predictions": (_text, "predictions.jsonl"),
        "report": (_text, "report.txt"),
    },
    "synth": {
        "num_docs": (int, 400),
        "multi_event_proportion": (float, 0.35),
    },
    "model": {
        "d_emb": (int, 32),
        "d_hidden": (int, 32),
        "d_state": (int, 32),
        "d_label": (int, 16),
        "mask_mode": (_text, "select"),
        "bol_source": (_text, "logits"),
    },
    "train": {
        "epochs": (int, 30),
        "batch_size": (int, 32),
        "learning_rate": (float, 5e-3),
        "optimizer": (_text, "adam"),
        "rho": (float, 0.9),
        "alpha_loss": (float, 1.0),
        "beta_loss": (float, 0.1),
        "clip_norm": (float, 5.0),
        "augment": (float, 0.0),
        "max_length": (_optional_int, None),
    },
    "decode": {
        "width": (int, 3),
        "max_len": (int, 8),
        "threshold": (_threshold, "tune"),
        "tune_mode": (_text, "classification"),
    },
    "strategy": {
        "strategy": (_text, "PD"),
        "domains": (_domains, ()),
        "target_domain": (_optional_text, None),
        "lambda_dom": (float, 0.1),
        "lambda_grl": (float, 1.0),
        "shared_dim": (int, 16),
        "private_dim": (int, 16),
        "classifier_dim": (int, 32),
        "combine": (_text, "concat"),
    },
}

POSITIVE = ("synth.num_docs", "model.d_emb", "model.d_hidden", "model.d_state", "model.d_label",
            "train.epochs", "train.batch_size", "decode.width", "strategy.shared_dim",
            "strategy.private_dim", "strategy.classifier_dim")
PATH_KEYS = ("run.corpus", "run.splits", "run.checkpoint", "run.log", "run.predictions", "run.report")


def _render(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ",".join(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({f"{s}.{k}": d for s, keys in SCHEMA.items() for k, (_, d) in keys.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def set_many(self, pairs: dict[str, str]) -> "RunConfig":
        """Parse and apply ``section.key -> text`` overrides."""
        bad, out = [], dict(self.values)
        for dotted, text in pairs.items():
            section, _, key = dotted.partition(".")
            spec = SCHEMA.get(section, {}).get(key)
            if spec is None:
                bad.append(dotted)
                continue
            try:
                out[dotted] = spec[0](text)
            except ValueError:
                bad.append(dotted)
        if bad:
            raise ConfigError("unknown or invalid config keys", bad)
        return RunConfig(out)

    def validate(self) -> "RunConfig":
        v, bad = self.values, []
        bad += [k for k in POSITIVE if v[k] <= 0]
        if not 0.0 <= v["train.rho"] <= 1.0:
            bad.append("train.rho")
        if not 0.0 <= v["synth.multi_event_proportion"] <= 1.0:
            bad.append("synth.multi_event_proportion")
        t = v["decode.threshold"]
        if t != "tune" and not 0.0 < t < 1.0:
            bad.append("decode.threshold")
        if v["decode.max_len"] < 2:
            bad.append("decode.max_len")
        if v["decode.tune_mode"] not in ("identification", "classification"):
            bad.append("decode.tune_mode")
        if v["model.mask_mode"] not in ("select", "product"):
            bad.append("model.mask_mode")
        if v["model.bol_source"] not in ("logits", "probs"):
            bad.append("model.bol_source")
        if v["train.optimizer"] not in ("adam", "sgd"):
            bad.append("train.optimizer")
        for k in ("train.learning_rate", "train.alpha_loss", "train.beta_loss", "strategy.lambda_dom",
                  "strategy.lambda_grl"):
            if v[k] < 0:
                bad.append(k)
        if not 0.0 <= v["train.augment"] <= 1.0:
            bad.append("train.augment")
        if v["strategy.strategy"] not in STRATEGIES:
            bad.append("strategy.strategy")
        if v["strategy.combine"] not in ("concat", "sum"):
            bad.append("strategy.combine")
        paths = [v[k] for k in PATH_KEYS]
        if len(set(paths)) != len(paths):
            bad += [k for k in PATH_KEYS if paths.count(v[k]) > 1]
        if bad:
            raise ConfigError("invalid config values", bad)
        return self

    def dumps(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            lines += [f"{k} = {_render(self.values[f'{section}.{k}'])}" for k in keys]
            lines.append("")
        return "\n".join(lines)

    def model_config(self) -> ModelConfig:
        v = self.values
        return ModelConfig(v["model.d_emb"], v["model.d_hidden"], v["model.d_state"], v["model.d_label"],
                           v["model.mask_mode"], v["model.bol_source"], v["train.alpha_loss"],
                           v["train.beta_loss"])

    def strategy_config(self) -> StrategyConfig:
        v = self.values
        return StrategyConfig(v["strategy.strategy"], v["strategy.domains"], v["strategy.target_domain"],
                              v["strategy.lambda_dom"], v["strategy.lambda_grl"], v["strategy.shared_dim"],
                              v["strategy.private_dim"], v["strategy.classifier_dim"], v["strategy.combine"])

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(seed=v["run.seed"], epochs=v["train.epochs"], batch_size=v["train.batch_size"],
                           learning_rate=v["train.learning_rate"], optimizer=v["train.optimizer"],
                           rho=v["train.rho"], clip_norm=v["train.clip_norm"], augment=v["train.augment"],
                           max_length=v["train.max_length"], model=self.model_config(),
                           strategy=self.strategy_config())


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {str(exc).splitlines()[0]}") from None
    pairs = {}
    for section in parser.sections():
        for key, value in parser.items(section, raw=True):
            pairs[f"{section}.{key}"] = value
    return RunConfig.defaults().set_many(pairs)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig.defaults()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
