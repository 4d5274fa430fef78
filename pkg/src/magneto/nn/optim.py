"""Adam, weight EMA and plateau learning-rate scheduling."""

from __future__ import annotations

import dataclasses
import math
from typing import Mapping

import torch


class NonFiniteGradient(FloatingPointError):
    """A gradient contained NaN or Inf."""


@dataclasses.dataclass
class AdamState:
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Bias-corrected Adam over a name -> tensor mapping."""

    def __init__(self, params: Mapping[str, torch.Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.state = AdamState(
            m={k: torch.zeros_like(p) for k, p in params.items()},
            v={k: torch.zeros_like(p) for k, p in params.items()},
            lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
        )

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    @torch.no_grad()
    def step(self, grads: Mapping[str, torch.Tensor] | None = None) -> None:
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        for name, g in grads.items():
            if not torch.isfinite(g).all():
                bad = int((~torch.isfinite(g)).sum())
                raise NonFiniteGradient(f"{bad} non-finite entries in gradient of {name!r} at step {self.state.step + 1}")
        s = self.state
        s.step += 1
        c1 = 1 - s.beta1**s.step
        c2 = 1 - s.beta2**s.step
        for name, g in grads.items():
            m, v = s.m[name], s.v[name]
            m.mul_(s.beta1).add_(g, alpha=1 - s.beta1)
            v.mul_(s.beta2).addcmul_(g, g, value=1 - s.beta2)
            denom = (v / c2).sqrt_().add_(s.eps)
            self.params[name].addcdiv_(m, denom, value=-s.lr / c1)

    def state_tensors(self) -> dict[str, torch.Tensor]:
        out = {f"adam/m/{k}": v for k, v in self.state.m.items()}
        out.update({f"adam/v/{k}": v for k, v in self.state.v.items()})
        return out

    def load_state_tensors(self, tensors: Mapping[str, torch.Tensor], step: int, lr: float) -> None:
        for k in self.state.m:
            self.state.m[k].copy_(tensors[f"adam/m/{k}"])
            self.state.v[k].copy_(tensors[f"adam/v/{k}"])
        self.state.step = step
        self.state.lr = lr


@torch.no_grad()
def ema_update(ema: Mapping[str, torch.Tensor], params: Mapping[str, torch.Tensor], decay: float = 0.999) -> Mapping[str, torch.Tensor]:
    """In place: ``ema <- decay * ema + (1 - decay) * params``."""
    for k, p in params.items():
        if ema[k].shape != p.shape:
            raise ValueError(f"EMA shape mismatch for {k!r}")
        ema[k].mul_(decay).add_(p.detach(), alpha=1 - decay)
    return ema


@torch.no_grad()
def clip_grad_norm(params: Mapping[str, torch.Tensor], max_norm: float) -> float:
    grads = [p.grad for p in params.values() if p.grad is not None]
    if not grads:
        return 0.0
    total = math.sqrt(sum(float((g.double() ** 2).sum()) for g in grads))
    if total > max_norm:
        for g in grads:
            g.mul_(max_norm / (total + 1e-12))
    return total


@dataclasses.dataclass
class PlateauScheduler:
    """Multiply the LR by ``factor`` after ``patience`` epochs without improvement."""

    lr: float
    factor: float = 0.75
    patience: int = 10
    best_loss: float = math.inf
    epochs_since_improve: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.factor < 1:
            raise ValueError("factor must lie in (0, 1)")

    def step(self, val_loss: float) -> float:
        if not math.isfinite(val_loss):
            raise ValueError("validation loss is not finite")
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.epochs_since_improve = 0
        else:
            self.epochs_since_improve += 1
            if self.epochs_since_improve >= self.patience:
                self.lr *= self.factor
                self.epochs_since_improve = 0
        return self.lr
