"""Joint nested-NER mention detection and typing with boundary knowledge."""

from .autodiff import GradTape, Tensor, pause_recording, set_checked
from .config import TrainConfig
from .data import (CorpusRecord, Entity, SyntheticGrammarConfig, Vocabulary,
                   gen_synthetic, load_corpus, save_corpus)
from .encoder import Sentence
from .evaluation import EvalReport, evaluate_model, evaluate_predictions, micro_prf
from .model import NestedNerModel
from .optim import AdamW
from .training import Trainer, adaptive_weights, records_to_training_pairs

__all__ = [
    "AdamW", "CorpusRecord", "Entity", "EvalReport", "GradTape",
    "NestedNerModel", "Sentence", "SyntheticGrammarConfig", "Tensor",
    "TrainConfig", "Trainer", "Vocabulary", "adaptive_weights",
    "evaluate_model", "evaluate_predictions", "gen_synthetic", "load_corpus",
    "micro_prf", "pause_recording", "records_to_training_pairs",
    "save_corpus", "set_checked",
]

__version__ = "0.1.0"
