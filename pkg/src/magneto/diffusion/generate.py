"""Arbitrary-length generation by crossfading independently sampled segments."""

from __future__ import annotations

import logging
import math
import warnings

import numpy as np

from ..signal_core import AudioBuffer, ConfigurationError, DelayTrajectory
from .sampler import ddim_sample
from .train import DiffusionModel

logger = logging.getLogger(__name__)

OVERLAP_FRACTION = 0.25
CHUNK_BATCH = 8


def sample_segments(model: DiffusionModel, count: int, seed: int = 0, churn: float = 0.1,
                    n_steps: int | None = None, length: int | None = None) -> np.ndarray:
    """``(count, length)`` raw samples in physical units (data scale undone)."""
    length = length or model.domain.segment_len
    den = model.denoiser()
    out = []
    for g, start in enumerate(range(0, count, CHUNK_BATCH)):
        b = min(CHUNK_BATCH, count - start)
        x = ddim_sample(den, model.schedule, (b, 1, length), seed=seed * 1_000_003 + g,
                        churn=churn, n_steps=n_steps)
        out.append(x[:, 0, :].double().numpy())
    return np.concatenate(out) / model.data_scale


def chunk_layout(total: int, seg: int, overlap_fraction: float = OVERLAP_FRACTION) -> tuple[int, int, int]:
    """``(n_chunks, hop, overlap)`` covering ``total`` samples."""
    overlap = int(round(seg * overlap_fraction))
    hop = seg - overlap
    if total <= seg:
        return 1, hop, overlap
    return 1 + math.ceil((total - seg) / hop), hop, overlap


def crossfade(chunks: np.ndarray, hop: int, overlap: int, total: int) -> np.ndarray:
    """Overlap-add with equal-power (sine/cosine) fades, trimmed to ``total``."""
    n, seg = chunks.shape
    out = np.zeros((n - 1) * hop + seg)
    t = (np.arange(overlap) + 0.5) / overlap
    fade_in, fade_out = np.sin(0.5 * np.pi * t), np.cos(0.5 * np.pi * t)
    for i, c in enumerate(chunks):
        c = c.copy()
        if i > 0:
            c[:overlap] *= fade_in
        if i < n - 1:
            c[seg - overlap:] *= fade_out
        out[i * hop:i * hop + seg] += c
    return out[:total]


def _long_sample(model: DiffusionModel, total: int, seed: int, churn: float, n_steps: int | None) -> np.ndarray:
    seg = model.domain.segment_len
    n, hop, overlap = chunk_layout(total, seg)
    chunks = sample_segments(model, n, seed=seed, churn=churn, n_steps=n_steps)
    logger.info("generated %d segment(s) of %d samples", n, seg)
    return crossfade(chunks, hop, overlap, total)


def generate_noise(model: DiffusionModel, duration: float, seed: int = 0, churn: float = 0.1,
                   n_steps: int | None = None) -> AudioBuffer:
    if model.domain.kind != "hiss":
        raise ConfigurationError("generate_noise needs a hiss checkpoint")
    if not duration > 0:
        raise ConfigurationError("duration must be positive")
    fs = int(model.domain.sample_rate)
    total = max(1, int(round(duration * fs)))
    return AudioBuffer(_long_sample(model, total, seed, churn, n_steps), fs)


def generate_trajectory(model: DiffusionModel, n_points: int, mean_delay: float, seed: int = 0,
                        churn: float = 0.1, n_steps: int | None = None,
                        audio_sample_rate: int = 44100) -> DelayTrajectory:
    if model.domain.kind != "trajectory":
        raise ConfigurationError("generate_trajectory needs a trajectory checkpoint")
    if n_points < 1:
        raise ConfigurationError("n_points must be >= 1")
    if not mean_delay >= 0:
        raise ConfigurationError("mean_delay must be non-negative")
    values = _long_sample(model, n_points, seed, churn, n_steps) + mean_delay
    clamped = np.mean(values < 0)
    if clamped > 0.01:
        warnings.warn(f"{100 * clamped:.1f}% of trajectory points clamped at 0; mean_delay is too small",
                      RuntimeWarning, stacklevel=2)
    return DelayTrajectory(np.maximum(values, 0.0), rate=float(model.domain.sample_rate),
                           audio_sample_rate=audio_sample_rate)


__all__ = ["sample_segments", "chunk_layout", "crossfade", "generate_noise", "generate_trajectory",
           "OVERLAP_FRACTION"]
