"""Waveform and spectral error metrics."""

from __future__ import annotations

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, model_validator

from ..nonlinear.model import esr_loss

MAG_FLOOR = 1e-8


class MrStftConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    fft_sizes: tuple[int, ...] = (1024, 2048, 512)
    hop_sizes: tuple[int, ...] = (120, 240, 50)
    win_lengths: tuple[int, ...] = (600, 1200, 240)

    @model_validator(mode="after")
    def _check(self):
        if not len(self.fft_sizes) == len(self.hop_sizes) == len(self.win_lengths):
            raise ValueError("one hop and window length per FFT size")
        for n, h, w in zip(self.fft_sizes, self.hop_sizes, self.win_lengths):
            if not 0 < h < w <= n:
                raise ValueError(f"need hop < win <= fft, got {h}, {w}, {n}")
        return self


def _stft_mag(x: torch.Tensor, n_fft: int, hop: int, win: int) -> torch.Tensor:
    window = torch.hann_window(win, dtype=x.dtype)
    s = torch.stft(x, n_fft, hop_length=hop, win_length=win, window=window, center=True,
                   pad_mode="reflect", return_complex=True)
    return torch.clamp(s.abs(), min=MAG_FLOOR)


def mrstft_loss(pred, target, cfg: MrStftConfig | None = None):
    """Spectral convergence plus mean absolute log-magnitude error, averaged over resolutions.

    Accepts 1-D (or batched ``(B, T)``) numpy arrays or tensors; tensors keep
    the graph so the value can serve as a training objective.
    """
    cfg = cfg or MrStftConfig()
    as_numpy = not isinstance(pred, torch.Tensor)
    p = torch.as_tensor(np.asarray(pred, dtype=np.float64)) if as_numpy else pred
    t = torch.as_tensor(np.asarray(target, dtype=np.float64)) if not isinstance(target, torch.Tensor) else target
    t = t.to(p.dtype)
    if p.shape != t.shape:
        raise ValueError("prediction and target shapes differ")
    if p.shape[-1] < max(cfg.fft_sizes):
        raise ValueError(f"signals must have at least {max(cfg.fft_sizes)} samples")
    if float(torch.sum(t.detach() ** 2)) == 0.0:
        raise ValueError("MR-STFT loss undefined for a silent target")
    total = 0.0
    for n, h, w in zip(cfg.fft_sizes, cfg.hop_sizes, cfg.win_lengths):
        sp, st = _stft_mag(p, n, h, w), _stft_mag(t, n, h, w)
        sc = torch.linalg.norm(st - sp) / torch.linalg.norm(st)
        mag = torch.mean(torch.abs(torch.log(st) - torch.log(sp)))
        total = total + sc + mag
    loss = total / len(cfg.fft_sizes)
    return float(loss) if as_numpy else loss


__all__ = ["MrStftConfig", "mrstft_loss", "esr_loss"]
