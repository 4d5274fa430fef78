"""Supervised training of the tape RNN with truncated BPTT.

Two alignment schemes are supported. ``supervised1`` compares the raw RNN
output with the demodulated target; gradients only see the RNN.
``supervised2`` pushes the RNN output through the differentiable delay line
and compares with the target as recorded.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from pathlib import Path
from typing import Iterator, Literal

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..nn import Adam, ParamStore, PlateauScheduler, clip_grad_norm, load_checkpoint, save_checkpoint
from ..signal_core import ConfigurationError, next_pow2, tv_delay_torch
from .data import TapeItem, usable_length
from .model import ARCHITECTURE, TapeRNN, save_model

logger = logging.getLogger(__name__)

Scheme = Literal["supervised1", "supervised2"]
SUPERVISED_I_WARMUP = 1024


class TrainingDiverged(RuntimeError):
    pass


class TapeRnnConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden_size: int = Field(64, ge=1)
    tbptt_chunk: int = Field(2048, ge=1)
    chunks_per_segment: int = Field(8, ge=1)
    init_len_mode: Literal["fixed_1024", "next_pow2_of_max_delay"] | None = None
    lr: float = Field(1e-3, gt=0)
    batch: int = Field(32, ge=1)
    max_epochs: int | None = Field(None, ge=1)
    max_wall_clock: float | None = Field(None, gt=0)
    grad_clip: float = Field(10.0, gt=0)
    lr_factor: float = 0.75
    patience: int = 10
    delay_capacity: int = Field(4096, ge=1)
    eval_segment: int = Field(88200, ge=1)
    trajectory_source: Literal["measured", "stored"] = "measured"
    seed: int = 0

    @model_validator(mode="after")
    def _budget(self):
        if self.max_epochs is None and self.max_wall_clock is None:
            raise ValueError("set max_epochs and/or max_wall_clock")
        return self


def warmup_length(scheme: Scheme, items: list[TapeItem], cfg: TapeRnnConfig) -> int:
    mode = cfg.init_len_mode or ("fixed_1024" if scheme == "supervised1" else "next_pow2_of_max_delay")
    if mode == "fixed_1024":
        return SUPERVISED_I_WARMUP
    return next_pow2(max(it.max_delay for it in items))


def chunk_losses(
    model: TapeRNN,
    x: torch.Tensor,
    y: torch.Tensor,
    y_demod: torch.Tensor,
    delay: torch.Tensor,
    scheme: Scheme,
    warmup: int,
    chunk: int,
) -> Iterator[torch.Tensor]:
    """Yield one differentiable ESR per TBPTT chunk of a ``(batch, time)`` segment.

    The first ``warmup`` samples only set the state (and fill the delay
    history); the caller must call ``backward`` on each loss before asking
    for the next, since the state is detached between chunks.
    """
    with torch.no_grad():
        hist, h = model(x[:, :warmup]) if warmup else (x[:, :0], None)
    for s in range(warmup, x.shape[1], chunk):
        e = min(s + chunk, x.shape[1])
        pred, h_new = model(x[:, s:e], h)
        if scheme == "supervised1":
            out, tgt = pred, y_demod[:, s:e]
        else:
            out, tgt = tv_delay_torch(pred, delay[:, s:e], history=hist), y[:, s:e]
        energy = torch.sum(tgt**2)
        yield torch.sum((tgt - out) ** 2) / torch.clamp(energy, min=1e-12)
        h = h_new.detach()
        hist = torch.cat([hist, pred.detach()], dim=1)[:, -max(warmup, 1):]


def _segments(items: list[TapeItem], seg_len: int) -> list[tuple[int, int]]:
    out = []
    for i, it in enumerate(items):
        for s in range(0, usable_length(it) - seg_len + 1, seg_len):
            out.append((i, s))
    return out


def _batch(items, index, seg_len):
    def stack(attr):
        rows = []
        for i, s in index:
            a = getattr(items[i], attr)
            rows.append(np.zeros(seg_len) if a is None else a[s:s + seg_len])
        return torch.from_numpy(np.stack(rows).astype(np.float32))
    return stack("x"), stack("y"), stack("y_demod"), stack("delay")


@torch.no_grad()
def evaluate(model: TapeRNN, items: list[TapeItem], warmup: int, segment: int = 88200,
             return_signals: bool = False) -> dict:
    """Pooled ESR in "demod" (raw output vs demodulated target) and "delayed" modes.

    Each file is cut into segments; every segment is preceded by ``warmup``
    samples of real input that only prime the state. Nothing before the
    first ``warmup`` samples of a file is scored.
    """
    windows = []
    for it in items:
        end = usable_length(it)
        seg = min(segment, end - warmup)
        for s in range(warmup, end - seg + 1, seg):
            windows.append((it, s, seg))
    if not windows:
        raise ConfigurationError("evaluation files are shorter than the warmup")
    num_d = den_d = num_y = den_y = 0.0
    signals = []
    for seg in sorted({w[2] for w in windows}):
        group = [w for w in windows if w[2] == seg]
        x = torch.from_numpy(np.stack([it.x[s - warmup:s + seg] for it, s, _ in group]))
        pred, _ = model(x)
        pred = pred.double()
        raw = pred[:, warmup:]
        delay = torch.from_numpy(np.stack([
            it.delay[s:s + seg] if it.delay is not None else np.zeros(seg) for it, s, _ in group
        ]))
        delayed = tv_delay_torch(raw, delay, history=pred[:, :warmup])
        y = torch.from_numpy(np.stack([it.y[s:s + seg] for it, s, _ in group])).double()
        yd = torch.from_numpy(np.stack([it.y_demod[s:s + seg] for it, s, _ in group])).double()
        num_d += float(torch.sum((yd - raw) ** 2))
        den_d += float(torch.sum(yd**2))
        num_y += float(torch.sum((y - delayed) ** 2))
        den_y += float(torch.sum(y**2))
        if return_signals:
            signals += list(zip(raw.numpy(), yd.numpy(), delayed.numpy(), y.numpy()))
    out = {"esr_demod": num_d / den_d, "esr_delayed": num_y / den_y}
    if return_signals:
        out["signals"] = signals
    return out


def _selection_metric(scheme: Scheme, metrics: dict) -> float:
    return metrics["esr_demod"] if scheme == "supervised1" else metrics["esr_delayed"]


def train_supervised(
    train_items: list[TapeItem],
    val_items: list[TapeItem],
    cfg: TapeRnnConfig,
    scheme: Scheme,
    out_path: str | Path,
    log_path: str | Path | None = None,
    resume: bool = False,
) -> Path:
    """Train and keep the best-validation checkpoint at ``out_path``.

    The latest state is written to ``<out_path>.last`` after every epoch
    so an interrupted run can continue with ``resume=True``.
    """
    if scheme not in ("supervised1", "supervised2"):
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    if scheme == "supervised1" and any(it.delay is None for it in train_items) and any(
        it.delay is not None for it in train_items
    ):
        raise ConfigurationError("mixed datasets with and without trajectories")
    out_path = Path(out_path)
    last_path = out_path.with_name(out_path.name + ".last")
    log_path = Path(log_path) if log_path else out_path.with_suffix(".log.csv")

    max_delay = max(it.max_delay for it in train_items + val_items)
    if scheme == "supervised2" and max_delay > cfg.delay_capacity:
        raise ConfigurationError(f"max delay {max_delay:.1f} exceeds delay-line capacity {cfg.delay_capacity}")
    warmup = warmup_length(scheme, train_items + val_items, cfg)
    seg_len = warmup + cfg.chunks_per_segment * cfg.tbptt_chunk
    segments = _segments(train_items, seg_len)
    if not segments:
        raise ConfigurationError("training files are shorter than one segment")

    torch.manual_seed(cfg.seed)
    model = TapeRNN(cfg.hidden_size, seed=cfg.seed)
    params = ParamStore.from_module(model, seed=cfg.seed)
    opt = Adam(params, lr=cfg.lr)
    sched = PlateauScheduler(cfg.lr, cfg.lr_factor, cfg.patience)
    epoch = 0
    best = math.inf
    elapsed = 0.0

    if resume and last_path.exists():
        header, tensors = load_checkpoint(last_path)
        ex = header["extra"]
        model.load_state_dict({k[7:]: v for k, v in tensors.items() if k.startswith("params/")})
        opt.load_state_tensors(tensors, ex["adam_step"], ex["lr"])
        sched = PlateauScheduler(ex["lr"], cfg.lr_factor, cfg.patience, ex["sched_best"], ex["sched_since"])
        epoch, best, elapsed = ex["epoch"], ex["best"], ex["elapsed"]
        logger.info("resumed from %s at epoch %d", last_path, epoch)
    else:
        with open(log_path, "w", newline="") as f:
            csv.writer(f).writerow(["epoch", "train_esr", "val_esr", "lr"])

    hp = {"scheme": scheme, "warmup": warmup, **cfg.model_dump()}
    t_start = time.monotonic() - elapsed

    def out_of_time() -> bool:
        return cfg.max_wall_clock is not None and time.monotonic() - t_start >= cfg.max_wall_clock

    while (cfg.max_epochs is None or epoch < cfg.max_epochs) and not out_of_time():
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(segments))
        model.train()
        losses = []
        for b in range(0, len(order), cfg.batch):
            index = [segments[i] for i in order[b:b + cfg.batch]]
            x, y, yd, d = _batch(train_items, index, seg_len)
            for loss in chunk_losses(model, x, y, yd, d, scheme, warmup, cfg.tbptt_chunk):
                if not torch.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                clip_grad_norm(params, cfg.grad_clip)
                opt.step()
                losses.append(float(loss.detach()))
            if out_of_time():
                break
        epoch += 1
        model.eval()
        val = _selection_metric(scheme, evaluate(model, val_items, warmup, cfg.eval_segment))
        opt.lr = sched.step(val)
        train_esr = float(np.mean(losses)) if losses else math.nan
        with open(log_path, "a", newline="") as f:
            csv.writer(f).writerow([epoch, f"{train_esr:.6g}", f"{val:.6g}", f"{opt.lr:.6g}"])
        logger.info("epoch %d train %.4f val %.4f lr %.2e", epoch, train_esr, val, opt.lr)
        if val < best:
            best = val
            save_model(out_path, model, seed=cfg.seed, hyperparameters=hp,
                       extra={"epoch": epoch, "val_esr": val})
        tensors = {f"params/{k}": v for k, v in model.state_dict().items()}
        tensors.update(opt.state_tensors())
        save_checkpoint(last_path, ARCHITECTURE, tensors, hyperparameters=hp, seed=cfg.seed, extra={
            "epoch": epoch, "best": best, "elapsed": time.monotonic() - t_start, "lr": opt.lr,
            "adam_step": opt.state.step, "sched_best": sched.best_loss, "sched_since": sched.epochs_since_improve,
        })
    return out_path
