"""Event detection as label-sequence generation with tracing attention."""

from .corpus import Corpus, Document, EventSchema, Mention, Sentence, load_corpus, save_corpus, split_corpus
from .inference import Prediction, beam_search, predict, predict_corpus, trace_triggers, tune_threshold
from .metrics import evaluate, score, score_by_event_count
from .model import ModelConfig, TracingModel
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Corpus", "Document", "EventSchema", "Mention", "ModelConfig", "Prediction", "Sentence",
    "TrainConfig", "TracingModel", "beam_search", "evaluate", "load_corpus", "predict", "predict_corpus",
    "save_corpus", "score", "score_by_event_count", "split_corpus", "trace_triggers", "train",
    "tune_threshold",
]
