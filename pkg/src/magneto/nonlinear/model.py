"""GRU + linear output model of the lumped tape nonlinearity."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..nn import expect_architecture, load_checkpoint, save_checkpoint

ARCHITECTURE = "tape-rnn-v1"


class TapeRNN(nn.Module):
    def __init__(self, hidden_size: int = 64, seed: int = 0):
        super().__init__()
        if hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        self.hidden_size = hidden_size
        self.gru = nn.GRU(1, hidden_size, batch_first=True)
        self.out = nn.Linear(hidden_size, 1)
        g = torch.Generator().manual_seed(seed)
        bound = 1.0 / math.sqrt(hidden_size)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_((torch.rand(p.shape, generator=g) * 2 - 1) * bound)

    def forward(self, x: torch.Tensor, h: torch.Tensor | None = None) -> tuple[torch.Tensor, torch.Tensor]:
        """``x``: ``(batch, time)``; returns ``(y, h_final)`` with ``y`` shaped like ``x``."""
        states, h = self.gru(x.unsqueeze(-1), h)
        return self.out(states).squeeze(-1), h


def esr_loss(pred, target):
    """Error-to-signal ratio, no pre-emphasis. Works on numpy arrays or tensors."""
    if isinstance(target, torch.Tensor):
        energy = torch.sum(target**2)
        if float(energy) == 0.0:
            raise ValueError("ESR undefined for an all-zero target")
        return torch.sum((target - pred) ** 2) / energy
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("prediction and target lengths differ")
    energy = float(np.sum(target**2))
    if energy == 0.0:
        raise ValueError("ESR undefined for an all-zero target")
    return float(np.sum((target - pred) ** 2) / energy)


def save_model(path: str | Path, model: TapeRNN, *, seed: int = 0, extra: dict | None = None,
               hyperparameters: dict | None = None) -> Path:
    hp = {"hidden_size": model.hidden_size, **(hyperparameters or {})}
    tensors = {f"params/{k}": v for k, v in model.state_dict().items()}
    return save_checkpoint(path, ARCHITECTURE, tensors, hyperparameters=hp, seed=seed, extra=extra)


def load_model(path: str | Path) -> tuple[TapeRNN, dict]:
    header, tensors = load_checkpoint(path)
    expect_architecture(header, ARCHITECTURE)
    model = TapeRNN(header["hyperparameters"]["hidden_size"])
    model.load_state_dict({k[len("params/"):]: v for k, v in tensors.items() if k.startswith("params/")})
    model.eval()
    return model, header


@torch.no_grad()
def tape_rnn_forward(model: TapeRNN, x: np.ndarray, h0: torch.Tensor | None = None,
                     block: int = 1 << 16) -> tuple[np.ndarray, torch.Tensor]:
    """Stateful mono forward pass; returns the undelayed prediction and final state."""
    x = np.asarray(x, dtype=np.float32)
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite samples")
    h = h0
    out = np.empty(x.size, dtype=np.float64)
    for s in range(0, x.size, block):
        y, h = model(torch.from_numpy(x[s:s + block])[None], h)
        if not torch.isfinite(h).all():
            raise FloatingPointError("RNN state became non-finite")
        out[s:s + block] = y[0].double().numpy()
    if h is None:
        h = torch.zeros(1, 1, model.hidden_size)
    return out, h
