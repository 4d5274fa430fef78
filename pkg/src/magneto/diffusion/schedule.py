"""Variance-exploding noise schedule and denoiser preconditioning."""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class NoiseSchedule(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sigma_data: float = Field(gt=0)
    sigma_min: float = Field(gt=0)
    sigma_max: float = Field(gt=0)
    n_steps: int = Field(ge=1)

    @model_validator(mode="after")
    def _order(self):
        if not self.sigma_min < self.sigma_max:
            raise ValueError("sigma_min must be below sigma_max")
        return self


HISS_SCHEDULE = NoiseSchedule(sigma_data=8e-4, sigma_min=5e-5, sigma_max=0.1, n_steps=16)
TRAJ_TOY_SCHEDULE = NoiseSchedule(sigma_data=6.8e-3, sigma_min=1e-5, sigma_max=0.5, n_steps=10)
TRAJ_REAL_SCHEDULE = NoiseSchedule(sigma_data=1e-4, sigma_min=1e-5, sigma_max=0.01, n_steps=10)


def schedule_sigmas(sched: NoiseSchedule, n_steps: int | None = None) -> np.ndarray:
    """Geometric ladder from ``sigma_max`` down to ``sigma_min`` (descending)."""
    n = sched.n_steps if n_steps is None else n_steps
    if n == 1:
        return np.array([sched.sigma_max])
    i = np.arange(n)
    sig = sched.sigma_max * (sched.sigma_min / sched.sigma_max) ** (i / (n - 1))
    sig[0], sig[-1] = sched.sigma_max, sched.sigma_min
    return sig


def precondition(sigma, sigma_data: float):
    """``(c_skip, c_out, c_in, c_noise)`` for noise level ``sigma`` (scalar, array or tensor)."""
    s2 = sigma**2 + sigma_data**2
    root = s2**0.5
    c_skip = sigma_data**2 / s2
    c_out = sigma * sigma_data / root
    c_in = 1.0 / root
    c_noise = (sigma.log() if hasattr(sigma, "log") else np.log(sigma)) / 4
    return c_skip, c_out, c_in, c_noise


def loss_weight(sigma, sigma_data: float):
    """Per-sample weight making the preconditioned L2 loss unit-scaled."""
    return (sigma**2 + sigma_data**2) / (sigma * sigma_data) ** 2


def log_uniform_sigma(rng, size, sched: NoiseSchedule) -> np.ndarray:
    return np.exp(rng.uniform(math.log(sched.sigma_min), math.log(sched.sigma_max), size=size))
