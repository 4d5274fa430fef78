"""Training loop, checkpoint layout and loading for the diffusion generators."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..nn import Adam, ParamStore, ema_update, expect_architecture, load_checkpoint, save_checkpoint
from ..signal_core import ConfigurationError
from .sampler import PreconditionedDenoiser, training_loss
from .schedule import HISS_SCHEDULE, TRAJ_TOY_SCHEDULE, NoiseSchedule
from .unet import HISS_UNET, TRAJ_UNET, UNet1d, UNetConfig

logger = logging.getLogger(__name__)

ARCHITECTURES = {"hiss": "hiss-unet-v1", "trajectory": "traj-unet-v1"}


class TrainingDiverged(RuntimeError):
    pass


class DiffusionDomain(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["hiss", "trajectory"]
    segment_len: int = Field(ge=1)
    normalization: Literal["none", "mean_normalize"] = "none"
    sample_rate: float = Field(gt=0)

    @model_validator(mode="after")
    def _traj_norm(self):
        if self.kind == "trajectory" and self.normalization != "mean_normalize":
            raise ValueError("trajectory segments are always mean-normalized")
        return self


HISS_DOMAIN = DiffusionDomain(kind="hiss", segment_len=66150, normalization="none", sample_rate=44100)
TRAJ_DOMAIN = DiffusionDomain(kind="trajectory", segment_len=512, normalization="mean_normalize", sample_rate=100)


class DiffusionTrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(2e-4, gt=0)
    ema: float = Field(0.999, ge=0, lt=1)
    batch: int = Field(16, ge=1)
    crop_len: int | None = Field(None, ge=1)
    rescale_to_sigma_data: bool = False
    max_steps: int | None = Field(None, ge=1)
    max_wall_clock: float | None = Field(None, gt=0)
    checkpoint_every: int = Field(500, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _budget(self):
        if self.max_steps is None and self.max_wall_clock is None:
            raise ValueError("set max_steps and/or max_wall_clock")
        return self


def domain_defaults(kind: str) -> tuple[DiffusionDomain, UNetConfig, NoiseSchedule]:
    if kind == "hiss":
        return HISS_DOMAIN, HISS_UNET, HISS_SCHEDULE
    if kind == "trajectory":
        return TRAJ_DOMAIN, TRAJ_UNET, TRAJ_TOY_SCHEDULE
    raise ConfigurationError(f"unknown diffusion domain {kind!r}")


class CropSampler:
    """Draws random fixed-length crops, length-weighted across signals."""

    def __init__(self, signals: Sequence[np.ndarray], crop_len: int, domain: DiffusionDomain, scale: float = 1.0):
        self.signals = [np.asarray(s, dtype=np.float64) for s in signals]
        if not self.signals or any(s.ndim != 1 for s in self.signals):
            raise ConfigurationError("training data must be a non-empty list of 1-D signals")
        self.crop_len = crop_len
        self.domain = domain
        self.scale = scale
        room = np.array([s.size - crop_len + 1 for s in self.signals], dtype=float)
        if np.all(room < 1):
            raise ConfigurationError(f"no training signal reaches the crop length {crop_len}")
        room[room < 1] = 0
        self.weights = room / room.sum()

    def crop(self, i: int, start: int) -> np.ndarray:
        seg = self.signals[i][start:start + self.crop_len]
        if self.domain.normalization == "mean_normalize":
            seg = seg - seg.mean()
        return seg * self.scale

    def batch(self, rng: np.random.Generator, size: int) -> torch.Tensor:
        which = rng.choice(len(self.signals), size=size, p=self.weights)
        rows = [self.crop(i, rng.integers(0, self.signals[i].size - self.crop_len + 1)) for i in which]
        return torch.from_numpy(np.stack(rows).astype(np.float32))[:, None, :]

    def data_std(self, rng: np.random.Generator, n: int = 512) -> float:
        return float(self.batch(rng, n).double().std())


@dataclasses.dataclass
class DiffusionModel:
    """A loaded generator: EMA network plus everything the samplers need."""

    net: UNet1d
    schedule: NoiseSchedule
    domain: DiffusionDomain
    data_scale: float
    header: dict

    def denoiser(self) -> PreconditionedDenoiser:
        return PreconditionedDenoiser(self.net, self.schedule.sigma_data)


def _save(path, domain, unet_cfg, sched, train_cfg, net, ema, opt, data_scale, step, elapsed, last_loss):
    tensors = {f"params/{k}": v for k, v in net.state_dict().items()}
    tensors.update({f"ema/{k}": v for k, v in ema.items()})
    tensors.update(opt.state_tensors())
    hp = {
        "unet": unet_cfg.model_dump(mode="json"),
        "domain": domain.model_dump(mode="json"),
        "data_scale": data_scale,
        "train": train_cfg.model_dump(mode="json"),
    }
    save_checkpoint(
        path, ARCHITECTURES[domain.kind], tensors, hyperparameters=hp,
        schedule=sched.model_dump(mode="json"), seed=train_cfg.seed, ema=True,
        extra={"step": step, "elapsed": elapsed, "adam_step": opt.state.step, "lr": opt.lr, "last_loss": last_loss},
    )


def train_diffusion(
    signals: Sequence[np.ndarray],
    domain: DiffusionDomain,
    out_path: str | Path,
    cfg: DiffusionTrainConfig,
    unet_cfg: UNetConfig | None = None,
    sched: NoiseSchedule | None = None,
    resume: bool = False,
) -> Path:
    """Adam on the denoising loss with an EMA copy of the weights.

    ``signals`` are in physical units (audio samples or delay samples).
    With ``rescale_to_sigma_data`` the crops are scaled so their standard
    deviation equals the schedule's ``sigma_data``; the factor is stored
    and undone at generation time.
    """
    _, default_unet, default_sched = domain_defaults(domain.kind)
    unet_cfg = unet_cfg or default_unet
    sched = sched or default_sched
    out_path = Path(out_path)
    crop_len = cfg.crop_len or domain.segment_len
    sampler = CropSampler(signals, crop_len, domain)

    torch.manual_seed(cfg.seed)
    net = UNet1d(unet_cfg, seed=cfg.seed)
    params = ParamStore.from_module(net, seed=cfg.seed)
    opt = Adam(params, lr=cfg.lr)
    ema = {k: v.detach().clone() for k, v in net.state_dict().items()}
    step, elapsed, last_loss = 0, 0.0, math.nan

    if resume and out_path.exists():
        header, tensors = load_checkpoint(out_path)
        expect_architecture(header, ARCHITECTURES[domain.kind])
        net.load_state_dict({k[7:]: v for k, v in tensors.items() if k.startswith("params/")})
        ema = {k[4:]: v.clone() for k, v in tensors.items() if k.startswith("ema/")}
        ex = header["extra"]
        opt.load_state_tensors(tensors, ex["adam_step"], ex["lr"])
        step, elapsed = ex["step"], ex["elapsed"]
        data_scale = header["hyperparameters"]["data_scale"]
        logger.info("resumed %s at step %d", out_path, step)
    elif cfg.rescale_to_sigma_data:
        data_scale = sched.sigma_data / sampler.data_std(np.random.default_rng([cfg.seed, 1 << 30]))
    else:
        data_scale = 1.0
    sampler.scale = data_scale

    t_start = time.monotonic() - elapsed

    def done() -> bool:
        if cfg.max_steps is not None and step >= cfg.max_steps:
            return True
        return cfg.max_wall_clock is not None and time.monotonic() - t_start >= cfg.max_wall_clock

    def checkpoint():
        _save(out_path, domain, unet_cfg, sched, cfg, net, ema, opt, data_scale, step,
              time.monotonic() - t_start, last_loss)

    net.train()
    while not done():
        # per-step streams keep resumed runs on the same data/noise sequence
        rng = np.random.default_rng([cfg.seed, step])
        gen = torch.Generator().manual_seed(cfg.seed * 1_000_003 + step)
        clean = sampler.batch(rng, cfg.batch)
        loss = training_loss(net, clean, sched, gen)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}; last good checkpoint kept at {out_path}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        ema_update(ema, dict(net.named_parameters()), cfg.ema)
        step += 1
        last_loss = float(loss.detach())
        if step % cfg.checkpoint_every == 0:
            checkpoint()
            logger.info("step %d loss %.4f", step, last_loss)
    checkpoint()
    return out_path


def load_diffusion(path: str | Path, use_ema: bool = True) -> DiffusionModel:
    header, tensors = load_checkpoint(path)
    expect_architecture(header, *ARCHITECTURES.values())
    hp = header["hyperparameters"]
    net = UNet1d(UNetConfig(**hp["unet"]))
    prefix = "ema/" if use_ema else "params/"
    state = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
    full = net.state_dict()
    full.update(state)
    net.load_state_dict(full)
    net.eval()
    return DiffusionModel(net, NoiseSchedule(**header["schedule"]), DiffusionDomain(**hp["domain"]),
                          float(hp["data_scale"]), header)
