"""Loading oracle datasets for nonlinear-block training."""

from __future__ import annotations

import dataclasses
import logging
import math
from pathlib import Path

import numpy as np

from ..signal_core import (
    AudioBuffer,
    ConfigurationError,
    demodulate,
    measure_trajectory,
    read_trajectory_csv,
    read_wav,
    upsample_trajectory,
)

logger = logging.getLogger(__name__)


@dataclasses.dataclass
class TapeItem:
    """One recording: left-channel input/target and per-sample delay."""

    name: str
    x: np.ndarray
    y: np.ndarray
    delay: np.ndarray | None
    y_demod: np.ndarray

    @property
    def max_delay(self) -> float:
        return float(self.delay.max()) if self.delay is not None else 0.0

    def __len__(self) -> int:
        return self.x.size


def make_item(name: str, inp: AudioBuffer, tgt: AudioBuffer, delay: np.ndarray | None) -> TapeItem:
    x = inp.channel(0)
    y = tgt.channel(0)
    if x.size != y.size:
        raise ConfigurationError(f"{name}: input and target lengths differ")
    if delay is None:
        y_demod = y
    else:
        y_demod = demodulate(AudioBuffer(y, tgt.sample_rate), delay).mono
    return TapeItem(name, x.astype(np.float32), y.astype(np.float32), delay, y_demod.astype(np.float32))


def load_split(root: str | Path, split: str, trajectory_source: str = "measured") -> list[TapeItem]:
    """Read ``<root>/<split>/input_###.wav`` etc.

    With ``trajectory_source="measured"`` the delay is recovered from the
    pulse train on the right channels; ``"stored"`` uses ``traj_###.csv``.
    Datasets without trajectories yield ``delay=None``.
    """
    d = Path(root) / split
    inputs = sorted(d.glob("input_*.wav"))
    if not inputs:
        raise FileNotFoundError(f"no input_*.wav files in {d}")
    items = []
    for path in inputs:
        idx = path.stem.split("_")[-1]
        inp = read_wav(path)
        tgt = read_wav(d / f"target_{idx}.wav")
        traj_path = d / f"traj_{idx}.csv"
        delay = None
        if traj_path.exists():
            if trajectory_source == "stored":
                traj = read_trajectory_csv(traj_path)
            elif trajectory_source == "measured":
                if inp.channels < 2 or tgt.channels < 2:
                    raise ConfigurationError(f"{path}: measured trajectories need stereo files")
                traj = measure_trajectory(AudioBuffer(inp.channel(1), inp.sample_rate),
                                          AudioBuffer(tgt.channel(1), tgt.sample_rate))
            else:
                raise ConfigurationError(f"unknown trajectory source {trajectory_source!r}")
            delay = upsample_trajectory(traj, inp.sample_rate, len(inp))
        items.append(make_item(f"{split}/{path.name}", inp, tgt, delay))
    return items


def usable_length(item: TapeItem) -> int:
    """Samples before the demodulated target runs out at the end of the file."""
    return len(item) - (int(math.ceil(item.max_delay)) + 1 if item.delay is not None else 0)
