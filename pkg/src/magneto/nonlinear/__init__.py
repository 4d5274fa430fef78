"""Recurrent model of the lumped tape nonlinearity and its supervised trainers."""

from .data import TapeItem, load_split, make_item
from .infer import infer
from .model import ARCHITECTURE, TapeRNN, esr_loss, load_model, save_model, tape_rnn_forward
from .train import TapeRnnConfig, TrainingDiverged, chunk_losses, evaluate, train_supervised, warmup_length

__all__ = [
    "ARCHITECTURE",
    "TapeItem",
    "TapeRNN",
    "TapeRnnConfig",
    "TrainingDiverged",
    "chunk_losses",
    "esr_loss",
    "evaluate",
    "infer",
    "load_model",
    "load_split",
    "make_item",
    "save_model",
    "tape_rnn_forward",
    "train_supervised",
    "warmup_length",
]
