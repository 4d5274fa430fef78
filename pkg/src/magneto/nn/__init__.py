"""Neural-network substrate: GRU cell, conv1d, Adam, EMA, LR schedule, gradcheck."""

from .checkpoint import CheckpointError, expect_architecture, load_checkpoint, save_checkpoint
from .core import ParamStore, conv1d, gradcheck, gru_cell, gru_params_from_torch, he_uniform_, init_gru_params
from .optim import Adam, AdamState, NonFiniteGradient, PlateauScheduler, clip_grad_norm, ema_update

__all__ = [
    "Adam",
    "AdamState",
    "CheckpointError",
    "NonFiniteGradient",
    "ParamStore",
    "PlateauScheduler",
    "clip_grad_norm",
    "conv1d",
    "ema_update",
    "expect_architecture",
    "gradcheck",
    "gru_cell",
    "gru_params_from_torch",
    "he_uniform_",
    "init_gru_params",
    "load_checkpoint",
    "save_checkpoint",
]
