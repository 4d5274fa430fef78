"""Full emulation chain: nonlinearity, then time-varying delay, then additive noise."""

from __future__ import annotations

import numpy as np

from ..signal_core import AudioBuffer, ConfigurationError, DelayTrajectory, apply_time_varying_delay, upsample_trajectory
from .model import TapeRNN, tape_rnn_forward


def infer(
    model: TapeRNN,
    x: AudioBuffer,
    tau: DelayTrajectory | np.ndarray | None = None,
    noise: AudioBuffer | np.ndarray | None = None,
) -> AudioBuffer:
    """Process a mono buffer. ``tau`` is a trajectory or a per-sample delay."""
    y, _ = tape_rnn_forward(model, x.mono)
    if tau is not None:
        delay = (upsample_trajectory(tau, x.sample_rate, y.size)
                 if isinstance(tau, DelayTrajectory) else np.asarray(tau, dtype=np.float64))
        y = apply_time_varying_delay(AudioBuffer(y, x.sample_rate), delay).mono
    if noise is not None:
        n = noise.mono if isinstance(noise, AudioBuffer) else np.asarray(noise, dtype=np.float64)
        if n.size < y.size:
            raise ConfigurationError("noise shorter than the signal")
        y = y + n[: y.size]
    return AudioBuffer(y, x.sample_rate)
