"""Preconditioned denoiser, training objective and DDIM sampling."""

from __future__ import annotations

import math
from typing import Callable, Protocol

import torch

from .schedule import NoiseSchedule, loss_weight, precondition, schedule_sigmas


class NonFiniteOutput(FloatingPointError):
    pass


class Denoiser(Protocol):
    def __call__(self, x: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor: ...


def denoise(net: Callable, x: torch.Tensor, sigma: torch.Tensor | float, sigma_data: float) -> torch.Tensor:
    """``D = c_skip x + c_out F(c_in x; c_noise)`` for a batch ``x`` of shape ``(B, C, T)``."""
    sigma = torch.as_tensor(sigma, dtype=x.dtype)
    if sigma.ndim == 0:
        sigma = sigma.expand(x.shape[0])
    c_skip, c_out, c_in, c_noise = precondition(sigma, sigma_data)
    bc = (-1,) + (1,) * (x.ndim - 1)
    f = net(x * c_in.view(bc), c_noise)
    out = c_skip.view(bc) * x + c_out.view(bc) * f
    if not torch.isfinite(out).all():
        raise NonFiniteOutput("denoiser produced non-finite values")
    return out


class PreconditionedDenoiser:
    """Binds a raw network ``F`` to the preconditioning for ``sigma_data``."""

    def __init__(self, net: Callable, sigma_data: float):
        self.net = net
        self.sigma_data = sigma_data

    def __call__(self, x: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
        return denoise(self.net, x, sigma, self.sigma_data)


class GaussianDenoiser:
    """Posterior mean for zero-mean i.i.d. Gaussian data of standard deviation ``s``."""

    def __init__(self, s: float):
        self.s = s

    def __call__(self, x: torch.Tensor, sigma) -> torch.Tensor:
        sigma = torch.as_tensor(sigma, dtype=x.dtype)
        if sigma.ndim == 1:
            sigma = sigma.view((-1,) + (1,) * (x.ndim - 1))
        return x * self.s**2 / (self.s**2 + sigma**2)


def training_loss(
    net: Callable,
    clean: torch.Tensor,
    sched: NoiseSchedule,
    generator: torch.Generator | None = None,
    sigma: torch.Tensor | None = None,
) -> torch.Tensor:
    """Weighted L2 denoising loss, LogUniform noise level per batch item.

    The squared error is averaged over elements within an item and over
    the batch, so a unit-scaled network target gives an O(1) loss.
    """
    b = clean.shape[0]
    if sigma is None:
        u = torch.rand(b, generator=generator, dtype=clean.dtype)
        lo, hi = math.log(sched.sigma_min), math.log(sched.sigma_max)
        sigma = torch.exp(lo + (hi - lo) * u)
    sigma = torch.as_tensor(sigma, dtype=clean.dtype).expand(b)
    noise = torch.randn(clean.shape, generator=generator, dtype=clean.dtype)
    bc = (-1,) + (1,) * (clean.ndim - 1)
    noisy = clean + sigma.view(bc) * noise
    d = denoise(net, noisy, sigma, sched.sigma_data)
    per_item = ((d - clean) ** 2).flatten(1).mean(1)
    return (loss_weight(sigma, sched.sigma_data) * per_item).mean()


@torch.no_grad()
def ddim_sample(
    denoiser: Denoiser,
    sched: NoiseSchedule,
    shape: tuple[int, ...],
    seed: int = 0,
    churn: float = 0.1,
    n_steps: int | None = None,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Euler integration of the probability-flow ODE down the geometric ladder.

    ``churn`` > 0 inflates each step's noise level by ``churn / n_steps``
    with fresh noise; the final step lands on sigma = 0.
    """
    if not 0.0 <= churn <= 1.0:
        raise ValueError("churn must lie in [0, 1]")
    sigmas = schedule_sigmas(sched, n_steps)
    n = len(sigmas)
    gamma = churn / n
    gen = torch.Generator().manual_seed(int(seed))
    x = torch.randn(shape, generator=gen, dtype=dtype) * sigmas[0]
    for i in range(n):
        s_cur = float(sigmas[i])
        s_next = float(sigmas[i + 1]) if i + 1 < n else 0.0
        s_hat = s_cur * (1 + gamma)
        if gamma > 0:
            x = x + math.sqrt(s_hat**2 - s_cur**2) * torch.randn(shape, generator=gen, dtype=dtype)
        d = denoiser(x, torch.full((shape[0],), s_hat, dtype=dtype))
        # the Euler step to sigma = 0 is exactly the denoised estimate
        x = d if s_next == 0.0 else x + (s_next - s_hat) * (x - d) / s_hat
    return x


def sample_variance_ratio(sched: NoiseSchedule, s: float, length: int = 4096, draws: int = 256,
                          seed: int = 0, churn: float = 0.0, n_steps: int | None = None) -> float:
    """Generated-to-target variance for the analytic Gaussian denoiser."""
    x = ddim_sample(GaussianDenoiser(s), sched, (draws, 1, length), seed=seed, churn=churn,
                    n_steps=n_steps, dtype=torch.float64)
    return float(x.var()) / s**2

