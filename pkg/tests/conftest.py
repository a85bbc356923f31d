import numpy as np
import pytest

from eventseq.corpus import Corpus, Document, EventSchema, Mention, Sentence
from eventseq.domains import StrategyConfig
from eventseq.encoder import Vocabulary
from eventseq.model import ModelConfig, TracingModel

SMALL = ModelConfig(d_emb=4, d_hidden=3, d_state=3, d_label=2)


def tiny_model(types=("A",), tokens=("a", "b", "c", "d"), seed=0, config=SMALL, strategy=None, domains=()):
    vocab = Vocabulary(tokens)
    return TracingModel.init(EventSchema(tuple(types)), vocab, config, strategy or StrategyConfig(),
                             domains, seed)


def toy_corpus(schema=None, domains=("x", "y"), docs_per_domain=4, seed=0):
    """Random small corpus with trigger tokens t0..t2 and filler f0..f4."""
    schema = schema or EventSchema(("A", "B", "C"))
    rng = np.random.default_rng(seed)
    docs = []
    for d in domains:
        for k in range(docs_per_domain):
            sents = []
            for _ in range(2):
                n = int(rng.integers(3, 8))
                toks = [f"f{int(i)}" for i in rng.integers(5, size=n)]
                mentions = []
                for pos in sorted(rng.choice(n, size=int(rng.integers(0, 3)), replace=False)):
                    t = int(rng.integers(len(schema.types)))
                    toks[pos] = f"t{t}"
                    mentions.append(Mention(int(pos), int(pos) + 1, schema.types[t]))
                sents.append(Sentence(tuple(toks), tuple(mentions)))
            docs.append(Document(f"{d}-{k}", d, tuple(sents)))
    return Corpus(tuple(docs), schema)


@pytest.fixture
def model():
    return tiny_model()


@pytest.fixture(scope="session")
def synthetic_run():
    """The acceptance-scale synthetic corpus, its split and a 30-epoch model."""
    import time

    from eventseq.corpus import split_corpus
    from eventseq.synth import default_spec, generate_synthetic_corpus
    from eventseq.training import TrainConfig, train

    start = time.perf_counter()
    corpus, lexicon = generate_synthetic_corpus(7, default_spec(400, multi_event_proportion=0.35))
    splits = split_corpus(corpus, 7)
    model, log = train(splits["train"], splits["dev"], TrainConfig(seed=7, epochs=30))
    return {"corpus": corpus, "lexicon": lexicon, "splits": splits, "model": model, "log": log,
            "train_seconds": time.perf_counter() - start}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
