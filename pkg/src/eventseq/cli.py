"""Command-line entry point: ``eventseq <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import corpus_stats, heterogeneity, load_segmentation, word_trigger_mismatch
from .config import ConfigError, RunConfig, load_config
from .corpus import Corpus, CorpusError, apply_manifest, load_corpus, save_corpus, split_corpus, split_manifest
from .domains import StrategyError, apply_strategy, run_uda
from .inference import load_predictions, predict_corpus, save_predictions, select_threshold, threshold_scan
from .metrics import EvalError, evaluate
from .model import TracingModel
from .reports import Report, add_eval, add_mapping, add_stats, prf_items
from .synth import SynthSpecError, default_spec, generate_synthetic_corpus
from .training import TrainingDiverged, train


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# flag name -> config key, per command
FLAG_KEYS = {
    "seed": "run.seed", "corpus": "run.corpus", "splits": "run.splits", "checkpoint": "run.checkpoint",
    "log": "run.log", "predictions": "run.predictions", "report": "run.report", "num_docs": "synth.num_docs",
    "epochs": "train.epochs", "width": "decode.width", "threshold": "decode.threshold",
    "max_len": "decode.max_len", "mode": "decode.tune_mode", "strategy": "strategy.strategy",
}


def _common(p: argparse.ArgumentParser, *flags: str) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    for f in flags:
        p.add_argument("--" + f.replace("_", "-"), dest=f, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eventseq", description="Tracing-attention event detection toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("synth", help="generate a synthetic multi-domain corpus"), "seed", "num_docs", "corpus")
    _common(sub.add_parser("split", help="write an 8:1:1 document split manifest"), "seed", "corpus", "splits")
    _common(sub.add_parser("train", help="train a model and write a checkpoint and loss log"),
            "seed", "corpus", "splits", "checkpoint", "log", "epochs", "strategy", "report")
    p = sub.add_parser("tune-threshold", help="pick the trigger threshold on the dev split")
    _common(p, "corpus", "splits", "checkpoint", "width", "max_len", "mode", "report")
    p.add_argument("--split", default="dev")
    p.add_argument("--write-config", action="store_true", help="store the tuned threshold in --config")
    p = sub.add_parser("predict", help="decode a split and write predictions")
    _common(p, "corpus", "splits", "checkpoint", "width", "max_len", "threshold", "predictions")
    p.add_argument("--split", default="test")
    p = sub.add_parser("eval", help="score predictions against gold mentions")
    _common(p, "corpus", "splits", "predictions", "report")
    p.add_argument("--split", default=None, help="restrict gold to one split of the manifest")
    p = sub.add_parser("analyze", help="corpus statistics and heterogeneity")
    _common(p, "corpus", "report")
    p.add_argument("--segmentation", default=None)
    p.add_argument("--annotations", nargs=2, default=None, metavar=("A", "B"),
                   help="two files with one label per line for Cohen's kappa")
    return parser


def resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    pairs = {}
    for key, dotted in FLAG_KEYS.items():
        value = getattr(args, key, None)
        if value is not None:
            pairs[dotted] = value
    for item in args.set:
        if "=" not in item:
            raise ConfigError("--set expects SECTION.KEY=VALUE", [item])
        k, _, v = item.partition("=")
        pairs[k.strip()] = v
    return cfg.set_many(pairs).validate()


def _splits(cfg: RunConfig) -> dict[str, Corpus]:
    corpus = load_corpus(cfg["run.corpus"])
    try:
        manifest = json.loads(Path(cfg["run.splits"]).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{cfg['run.splits']}: malformed split manifest ({exc})") from None
    return apply_manifest(corpus, manifest)


def _report(cfg: RunConfig, command: str) -> Report:
    r = Report()
    r.section("command", [("name", command)])
    r.config(cfg.dumps())
    return r


def cmd_synth(cfg: RunConfig, args) -> str:
    spec = default_spec(cfg["synth.num_docs"], multi_event_proportion=cfg["synth.multi_event_proportion"])
    corpus, _ = generate_synthetic_corpus(cfg["run.seed"], spec)
    save_corpus(corpus, cfg["run.corpus"])
    return f"wrote {len(corpus)} documents to {cfg['run.corpus']}"


def cmd_split(cfg: RunConfig, args) -> str:
    corpus = load_corpus(cfg["run.corpus"])
    splits = split_corpus(corpus, cfg["run.seed"])
    Path(cfg["run.splits"]).write_text(json.dumps(split_manifest(splits, cfg["run.seed"]), indent=1) + "\n",
                                       encoding="utf-8")
    sizes = " ".join(f"{k}={len(v)}" for k, v in splits.items())
    return f"wrote split manifest {cfg['run.splits']} ({sizes})"


def cmd_train(cfg: RunConfig, args) -> str:
    splits = _splits(cfg)
    tc = cfg.train_config()
    if tc.strategy.strategy == "ADA":
        (source,) = tc.strategy.domains
        tau = cfg["decode.threshold"]
        model, log, blocks = run_uda(splits, source, tc.strategy.target_domain, tc, cfg["decode.width"],
                                     None if tau == "tune" else tau)
        report = _report(cfg, "train")
        for block, modes in blocks.items():
            report.section(block, [kv for mode, c in modes.items() for kv in prf_items(mode, c)])
        report.section("domain_accuracy", [(f"epoch{r['epoch']}", r["dom_acc"]) for r in log.rows])
        report.save(cfg["run.report"])
    else:
        plan = apply_strategy(splits, tc.strategy)
        model, log = train(plan.train, plan.dev, tc, domains=plan.domains)
    model.save(cfg["run.checkpoint"])
    log.save(cfg["run.log"])
    last = log.rows[-1]
    return f"trained {len(log.rows)} epochs, final J={last['J']!r}; wrote {cfg['run.checkpoint']} and {cfg['run.log']}"


def cmd_tune(cfg: RunConfig, args) -> str:
    model = TracingModel.load(cfg["run.checkpoint"])
    dev = _splits(cfg)[args.split]
    scan = threshold_scan(model, dev, cfg["decode.tune_mode"], cfg["decode.width"], cfg["decode.max_len"])
    tau = select_threshold(scan)
    if args.report:
        report = _report(cfg, "tune-threshold")
        add_mapping(report, "scan", {f"tau={t}": f for t, f in scan.items()})
        report.section("result", [("threshold", tau)])
        report.save(cfg["run.report"])
    if args.write_config:
        if not args.config:
            raise ConfigError("--write-config needs --config", ["run.config"])
        tuned = cfg.set_many({"decode.threshold": str(tau)})
        Path(args.config).write_text(tuned.dumps(), encoding="utf-8")
    return f"decode.threshold = {tau}"


def cmd_predict(cfg: RunConfig, args) -> str:
    model = TracingModel.load(cfg["run.checkpoint"])
    splits = _splits(cfg)
    tau = cfg["decode.threshold"]
    if tau == "tune":
        tau = select_threshold(threshold_scan(model, splits["dev"], cfg["decode.tune_mode"],
                                              cfg["decode.width"], cfg["decode.max_len"]))
    preds = predict_corpus(model, splits[args.split], cfg["decode.width"], tau, cfg["decode.max_len"])
    save_predictions(preds, cfg["run.predictions"])
    return f"wrote {len(preds)} predictions to {cfg['run.predictions']} (threshold {tau})"


def cmd_eval(cfg: RunConfig, args) -> str:
    gold = _splits(cfg)[args.split] if args.split else load_corpus(cfg["run.corpus"])
    ev = evaluate(gold, load_predictions(cfg["run.predictions"]))
    report = _report(cfg, "eval")
    add_eval(report, ev)
    report.save(cfg["run.report"])
    ident, cls = ev.overall["identification"], ev.overall["classification"]
    return f"identification F1={ident.f1:.6f} classification F1={cls.f1:.6f}; wrote {cfg['run.report']}"


def cmd_analyze(cfg: RunConfig, args) -> str:
    from .analysis import cohen_kappa

    corpus = load_corpus(cfg["run.corpus"])
    report = _report(cfg, "analyze")
    stats = corpus_stats(corpus)
    het = heterogeneity(corpus) if len(corpus.domains) >= 2 else None
    add_stats(report, stats, het, corpus.schema.types)
    if args.segmentation:
        add_mapping(report, "word_trigger_mismatch",
                    word_trigger_mismatch(corpus, load_segmentation(args.segmentation)))
    if args.annotations:
        a, b = (Path(p).read_text(encoding="utf-8").split() for p in args.annotations)
        report.section("agreement", [("items", len(a)), ("cohen_kappa", cohen_kappa(a, b))])
    report.save(cfg["run.report"])
    return f"wrote {cfg['run.report']}"


COMMANDS = {
    "synth": cmd_synth, "split": cmd_split, "train": cmd_train, "tune-threshold": cmd_tune,
    "predict": cmd_predict, "eval": cmd_eval, "analyze": cmd_analyze,
}

EXPECTED = (ConfigError, CorpusError, EvalError, StrategyError, SynthSpecError, TrainingDiverged,
            OSError, KeyError, ValueError)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
        print(COMMANDS[args.command](cfg, args))
        return 0
    except EXPECTED as exc:
        kind = type(exc).__name__
        message = " ".join(str(exc).split()) or kind
        print(f"error: {kind}: {message}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
