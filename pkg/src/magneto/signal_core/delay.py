"""Time-varying fractional delay line (linear interpolation) and its inverse.

The same interpolation kernel is provided twice: a numpy path used by the
oracle and at inference, and a torch path that is differentiable with
respect to both the signal and the delay, used by delay-aware training.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import torch

from .buffers import AudioBuffer, ConfigurationError, DelayTrajectory


class DelayRangeError(ValueError):
    """A requested delay exceeds the delay line capacity."""


def upsample_trajectory(traj: DelayTrajectory, fs: int, length: int) -> np.ndarray:
    """Per-sample delays by linear interpolation between pulse instants.

    Point ``k`` sits at audio sample ``k * fs / rate``; ends are held constant.
    """
    if len(traj) == 0:
        raise ConfigurationError("empty trajectory")
    hop = fs / traj.rate
    pos = np.arange(len(traj)) * hop
    return np.interp(np.arange(length, dtype=np.float64), pos, traj.values)


def delay_weights(d: float, capacity: int) -> np.ndarray:
    """Interpolation weights over a buffer of ``capacity + 1`` past inputs.

    Entry ``i`` weights the input delayed by ``capacity - i`` samples.
    """
    if not 0 <= d <= capacity:
        raise DelayRangeError(f"delay {d} outside [0, {capacity}]")
    taps = np.arange(capacity, -1, -1, dtype=np.float64)
    return np.maximum(0.0, 1.0 - np.abs(taps - d))


def delay_weights_torch(d: torch.Tensor, capacity: int) -> torch.Tensor:
    """Differentiable variant of :func:`delay_weights` (last dim is the tap axis)."""
    if torch.any(d < 0) or torch.any(d > capacity):
        raise DelayRangeError(f"delay outside [0, {capacity}]")
    taps = torch.arange(capacity, -1, -1, dtype=d.dtype, device=d.device)
    return torch.relu(1.0 - torch.abs(taps - d.unsqueeze(-1)))


@dataclasses.dataclass
class DelayLineState:
    """Streaming delay line: ring of the last ``capacity + 1`` inputs."""

    capacity: int
    buffer: np.ndarray = dataclasses.field(init=False)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ConfigurationError("delay line capacity must be >= 1")
        self.buffer = np.zeros(self.capacity + 1)

    @classmethod
    def for_max_delay(cls, max_delay: float) -> "DelayLineState":
        return cls(int(math.ceil(max_delay)) + 1)

    def process(self, x: np.ndarray, delay: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        delay = np.asarray(delay, dtype=np.float64)
        if delay.size and (delay.min() < 0 or delay.max() > self.capacity):
            raise DelayRangeError(
                f"delay range [{delay.min():.3f}, {delay.max():.3f}] exceeds capacity {self.capacity}"
            )
        history = self.buffer[1:]  # the newest sample joins below
        y = _interp_delay(np.concatenate([history, x]), delay, offset=history.size)
        self.buffer = np.concatenate([self.buffer, x])[-(self.capacity + 1):]
        return y


def _interp_delay(padded: np.ndarray, delay: np.ndarray, offset: int) -> np.ndarray:
    n = np.arange(delay.size) + offset
    pos = n - delay
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    ext = np.concatenate([np.zeros(1), padded, np.zeros(1)])  # guard cells
    a = ext[np.clip(i0, -1, padded.size) + 1]
    b = ext[np.clip(i0 + 1, -1, padded.size) + 1]
    return (1.0 - frac) * a + frac * b


def apply_time_varying_delay(
    x: AudioBuffer, delay: np.ndarray, capacity: int | None = None
) -> AudioBuffer:
    """``y[n] = x[n - delay[n]]`` with linear interpolation, zero initial state.

    ``delay`` is one value per sample, shared by all channels.
    """
    delay = np.asarray(delay, dtype=np.float64)
    if delay.size != len(x):
        raise ConfigurationError("delay length differs from signal length")
    if capacity is None:
        capacity = int(math.ceil(delay.max())) + 1 if delay.size else 1
    out = np.empty_like(x.samples)
    for ch in range(x.channels):
        out[ch] = DelayLineState(capacity).process(x.samples[ch], delay)
    return AudioBuffer(out, x.sample_rate)


def tv_delay_torch(
    x: torch.Tensor,
    delay: torch.Tensor,
    history: torch.Tensor | None = None,
    capacity: int | None = None,
) -> torch.Tensor:
    """Differentiable time-varying delay over the last axis.

    ``history`` holds samples preceding ``x`` (zeros if omitted). Gradients
    reach ``x``, ``history`` and ``delay``. At integer delays the
    interpolation pair is chosen so that the gradient w.r.t. the delay is
    the left limit.
    """
    if delay.shape != x.shape:
        raise ConfigurationError("delay shape must match signal shape")
    if capacity is not None and (torch.any(delay < 0) or torch.any(delay > capacity)):
        raise DelayRangeError(f"delay outside [0, {capacity}]")
    if history is None:
        history = x.new_zeros(x.shape[:-1] + (0,))
    padded = torch.cat([history, x], dim=-1)
    off = history.shape[-1]
    n = torch.arange(x.shape[-1], dtype=delay.dtype, device=delay.device) + off
    with torch.no_grad():
        # ceil(d) - 1 puts an integer delay at frac == 1 on the upper tap
        base = torch.ceil(delay) - 1.0
    frac = delay - base  # in (0, 1]; carries the delay gradient
    i_near = (n - base).long()  # sample at delay `base`
    i_far = i_near - 1  # sample at delay `base + 1`
    ext = torch.cat(
        [padded.new_zeros(padded.shape[:-1] + (1,)), padded, padded.new_zeros(padded.shape[:-1] + (1,))],
        dim=-1,
    )
    hi = padded.shape[-1]
    near = torch.gather(ext, -1, torch.clamp(i_near, -1, hi) + 1)
    far = torch.gather(ext, -1, torch.clamp(i_far, -1, hi) + 1)
    return (1.0 - frac) * near + frac * far


def demodulate(y: AudioBuffer, traj: DelayTrajectory | np.ndarray) -> AudioBuffer:
    """Undo ``y[n] = x[n - tau[n]]`` by resampling onto the uniform grid.

    ``(n - tau[n], y[n])`` are treated as nonuniform samples of ``x`` and
    linearly interpolated. Grid points outside the warped range are zero.
    """
    if isinstance(traj, DelayTrajectory):
        tau = upsample_trajectory(traj, y.sample_rate, len(y))
    else:
        tau = np.asarray(traj, dtype=np.float64)
    if tau.size != len(y):
        raise ConfigurationError("trajectory length differs from signal length")
    n = np.arange(len(y), dtype=np.float64)
    warped = n - tau
    if np.any(np.diff(warped) < 0):
        raise ConfigurationError("warped time decreases (tape reversal); cannot demodulate")
    out = np.empty_like(y.samples)
    for ch in range(y.channels):
        out[ch] = np.interp(n, warped, y.samples[ch], left=0.0, right=0.0)
    return AudioBuffer(out, y.sample_rate)
