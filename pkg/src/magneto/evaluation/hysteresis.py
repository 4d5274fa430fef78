"""Ramped-sine hysteresis-loop extraction."""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np

System = Callable[[np.ndarray], np.ndarray]


@dataclasses.dataclass
class RampedSineResult:
    loops: list[tuple[np.ndarray, np.ndarray]]  # (input, output) per cycle
    area: float  # enclosed area of the final (full-scale) cycle
    width: float  # input distance between the zero-output crossings of the final cycle
    saturation: float  # peak |output| of the final cycle
    deadzone_ratio: float  # small-signal secant gain over the largest secant gain
    peak: float

    @property
    def full_scale_square(self) -> float:
        return (2 * self.peak) ** 2

    @property
    def relative_area(self) -> float:
        return self.area / self.full_scale_square


def ramped_sine(f0: float, cycles: int, peak: float, fs: int = 44100) -> np.ndarray:
    n = int(round(cycles * fs / f0))
    t = np.arange(n) / fs
    return peak * (np.arange(n) / n) * np.sin(2 * np.pi * f0 * t)


def loop_area(x: np.ndarray, y: np.ndarray) -> float:
    """Shoelace area of the polygon traced by ``(x, y)``, closed back to its start."""
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _zero_crossings(x: np.ndarray, y: np.ndarray, rising: bool) -> list[float]:
    s = np.sign(y)
    idx = np.nonzero((s[:-1] < 0) & (s[1:] >= 0) if rising else (s[:-1] > 0) & (s[1:] <= 0))[0]
    out = []
    for i in idx:
        frac = y[i] / (y[i] - y[i + 1]) if y[i] != y[i + 1] else 0.0
        out.append(float(x[i] + frac * (x[i + 1] - x[i])))
    return out


def ramped_sine_analysis(system: System, f0: float = 50.0, cycles: int = 20, peak: float = 1.0,
                         fs: int = 44100, small_signal_fraction: float = 0.1) -> RampedSineResult:
    """Drive ``system`` with a sine whose amplitude ramps linearly from 0 to ``peak``.

    The deadzone ratio compares the secant gain ``max|y|/max|x|`` of the
    cycle whose amplitude is ``small_signal_fraction`` of full scale with
    the largest secant gain over all cycles.
    """
    x = ramped_sine(f0, cycles, peak, fs)
    y = np.asarray(system(x), dtype=np.float64)
    if y.shape != x.shape:
        raise ValueError("system changed the signal length")
    bounds = np.round(np.arange(cycles + 1) * x.size / cycles).astype(int)
    loops = [(x[a:b], y[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    gains = np.array([np.max(np.abs(ly)) / max(np.max(np.abs(lx)), 1e-300) for lx, ly in loops])
    small = min(cycles - 1, max(0, int(round(small_signal_fraction * cycles)) - 1))
    deadzone = float(gains[small] / gains.max()) if gains.max() > 0 else 0.0
    fx, fy = loops[-1]
    ups, downs = _zero_crossings(fx, fy, True), _zero_crossings(fx, fy, False)
    width = abs(ups[-1] - downs[-1]) if ups and downs else 0.0
    return RampedSineResult(loops, loop_area(fx, fy), width, float(np.max(np.abs(fy))), deadzone, peak)
