"""Audio and trajectory containers plus their file formats."""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import numpy as np
from scipy.io import wavfile


class ConfigurationError(ValueError):
    """Raised for inconsistent signal or measurement settings."""


@dataclasses.dataclass
class AudioBuffer:
    """Uniformly sampled audio, stored as ``(channels, frames)`` float64."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[0] not in (1, 2):
            raise ConfigurationError(f"expected 1 or 2 channels, got shape {s.shape}")
        if int(self.sample_rate) <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = s
        self.sample_rate = int(self.sample_rate)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def channel(self, index: int) -> np.ndarray:
        return self.samples[index]

    @property
    def mono(self) -> np.ndarray:
        if self.channels != 1:
            raise ConfigurationError("buffer is not mono")
        return self.samples[0]

    @classmethod
    def stereo(cls, left: np.ndarray, right: np.ndarray, sample_rate: int) -> "AudioBuffer":
        if len(left) != len(right):
            raise ConfigurationError("stereo channels differ in length")
        return cls(np.stack([left, right]), sample_rate)


@dataclasses.dataclass
class DelayTrajectory:
    """Record-to-playback delay in audio samples, one value per probing pulse."""

    values: np.ndarray
    rate: float = 100.0
    audio_sample_rate: int = 44100
    gaps: np.ndarray | None = None  # indices filled by interpolation

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("trajectory contains non-finite values")
        if np.any(v < 0):
            raise ConfigurationError("trajectory contains negative delays")
        self.values = v

    def __len__(self) -> int:
        return self.values.size

    @property
    def hop(self) -> float:
        """Audio samples between consecutive trajectory points."""
        return self.audio_sample_rate / self.rate


def read_wav(path: str | Path) -> AudioBuffer:
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    else:
        data = data.astype(np.float64)
    if data.ndim == 2:
        data = data.T
    return AudioBuffer(data, rate)


def write_wav(path: str | Path, buf: AudioBuffer, fmt: str = "float32") -> None:
    """Write ``buf`` as 16-bit PCM (``fmt="pcm16"``) or 32-bit IEEE float."""
    data = buf.samples.T if buf.channels == 2 else buf.samples[0]
    if fmt == "pcm16":
        out = np.clip(np.round(data * 32768.0), -32768, 32767).astype("<i2")
    elif fmt == "float32":
        out = data.astype("<f4")
    else:
        raise ConfigurationError(f"unknown wav format {fmt!r}")
    wavfile.write(str(path), buf.sample_rate, out)


def write_trajectory_csv(path: str | Path, traj: DelayTrajectory) -> None:
    # header names the two metadata fields; the next line carries their values
    lines = ["rate_hz,audio_sample_rate", f"{_fmt_number(traj.rate)},{traj.audio_sample_rate}"]
    lines += [repr(float(v)) for v in traj.values]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def read_trajectory_csv(path: str | Path) -> DelayTrajectory:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "rate_hz,audio_sample_rate":
        raise ConfigurationError(f"{path}: missing trajectory header")
    rate_s, fs_s = lines[1].split(",")
    values = np.array([float(v) for v in lines[2:] if v.strip()], dtype=np.float64)
    return DelayTrajectory(values, float(rate_s), int(fs_s))


def _fmt_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def next_pow2(x: float) -> int:
    """Smallest power of two that is >= ``x`` (and >= 1)."""
    return 1 if x <= 1 else 1 << math.ceil(math.log2(x))
