"""Fully convolutional 1-D U-Net conditioned on the noise level."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, model_validator
from torch import nn

from ..nn import he_uniform_


class UNetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    in_channels: int = 1
    channels: tuple[int, ...] = (16, 24, 32, 48)
    strides: tuple[int, ...] = (2, 2, 2, 2)
    kernel_size: int = Field(5, ge=1)
    emb_dim: int = Field(32, ge=2)
    group_size: int = 8

    @model_validator(mode="after")
    def _check(self):
        if len(self.strides) != len(self.channels):
            raise ValueError("one stride per stage")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")
        if any(c % self.group_size for c in self.channels):
            raise ValueError("channel counts must be multiples of group_size")
        return self

    @property
    def depth(self) -> int:
        return len(self.channels)

    @property
    def total_stride(self) -> int:
        return math.prod(self.strides)


# Concrete nets for the two domains; channel and stride choices hit the parameter budgets.
# The hiss net resamples by 4 per stage so the receptive field spans several mains-hum periods.
HISS_UNET = UNetConfig(channels=(16, 16, 32, 32), strides=(4, 4, 4, 4), kernel_size=5, emb_dim=32)
TRAJ_UNET = UNetConfig(channels=(16, 16, 32), strides=(2, 2, 2), kernel_size=5, emb_dim=16)


def noise_features(c_noise: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal features of the scalar noise code, ``(batch, dim)``."""
    half = dim // 2
    freqs = torch.exp(torch.linspace(0.0, math.log(1000.0), half, dtype=c_noise.dtype, device=c_noise.device))
    arg = c_noise[:, None] * freqs[None, :]
    return torch.cat([torch.cos(arg), torch.sin(arg)], dim=1)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, k: int, emb_dim: int, group: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(max(1, cin // group), cin)
        self.conv1 = nn.Conv1d(cin, cout, k, padding=k // 2)
        self.affine = nn.Linear(emb_dim, 2 * cout)
        self.norm2 = nn.GroupNorm(max(1, cout // group), cout)
        self.conv2 = nn.Conv1d(cout, cout, k, padding=k // 2)
        self.skip = nn.Conv1d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        scale, shift = self.affine(emb)[:, :, None].chunk(2, dim=1)
        h = self.norm2(h) * (1 + scale) + shift
        h = self.conv2(F.silu(h))
        return (h + self.skip(x)) / math.sqrt(2)


class UNet1d(nn.Module):
    """Encoder/decoder with skip concatenation; output length equals input length."""

    def __init__(self, cfg: UNetConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        k, e, g = cfg.kernel_size, cfg.emb_dim, cfg.group_size
        ch = cfg.channels
        self.emb = nn.Sequential(nn.Linear(e, e), nn.SiLU(), nn.Linear(e, e))
        self.stem = nn.Conv1d(cfg.in_channels, ch[0], k, padding=k // 2)
        self.enc = nn.ModuleList()
        self.down = nn.ModuleList()
        for i, c in enumerate(ch):
            nxt = ch[i + 1] if i + 1 < len(ch) else c
            self.enc.append(ResBlock(c, c, k, e, g))
            self.down.append(nn.Conv1d(c, nxt, k, stride=cfg.strides[i], padding=k // 2))
        self.mid = ResBlock(ch[-1], ch[-1], k, e, g)
        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for i in reversed(range(len(ch))):
            prev = ch[i + 1] if i + 1 < len(ch) else ch[i]
            self.up.append(nn.Conv1d(prev, ch[i], k, padding=k // 2))
            self.dec.append(ResBlock(2 * ch[i], ch[i], k, e, g))
        self.out_norm = nn.GroupNorm(max(1, ch[0] // g), ch[0])
        self.out = nn.Conv1d(ch[0], cfg.in_channels, k, padding=k // 2)

        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for m in self.modules():
                if isinstance(m, nn.Conv1d):
                    he_uniform_(m.weight, gen)
                    m.bias.zero_()
                elif isinstance(m, nn.Linear):
                    bound = 1 / math.sqrt(m.in_features)
                    m.weight.copy_((torch.rand(m.weight.shape, generator=gen) * 2 - 1) * bound)
                    m.bias.zero_()
            # start as F == 0, so the denoiser begins as c_skip * x
            self.out.weight.zero_()
            self.out.bias.zero_()

    def forward(self, x: torch.Tensor, c_noise: torch.Tensor) -> torch.Tensor:
        """``x``: ``(batch, channels, time)``; ``c_noise``: ``(batch,)``."""
        n = x.shape[-1]
        stride = self.cfg.total_stride
        pad = (-n) % stride
        if pad:
            x = F.pad(x, (0, pad))
        emb = self.emb(noise_features(c_noise.to(x.dtype), self.cfg.emb_dim))
        h = self.stem(x)
        skips = []
        for block, down in zip(self.enc, self.down):
            h = block(h, emb)
            skips.append(h)
            h = down(h)
        h = self.mid(h, emb)
        for up, block, skip, s in zip(self.up, self.dec, reversed(skips), reversed(self.cfg.strides)):
            h = up(F.interpolate(h, scale_factor=s, mode="nearest"))
            h = block(torch.cat([h, skip], dim=1), emb)
        out = self.out(F.silu(self.out_norm(h)))
        return out[..., :n]


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
