"""Pulse-train probing of a tape transport and delay trajectory extraction."""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from .buffers import AudioBuffer, ConfigurationError, DelayTrajectory

logger = logging.getLogger(__name__)


class MeasurementError(RuntimeError):
    """Pulse detection or pairing failed."""


@dataclasses.dataclass(frozen=True)
class PulseTrainSpec:
    duration: float
    sample_rate: int = 44100
    pulse_rate: float = 100.0
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.sample_rate <= 0 or self.pulse_rate <= 0:
            raise ConfigurationError("rates must be positive")
        period = self.sample_rate / self.pulse_rate
        if abs(period - round(period)) > 1e-9:
            raise ConfigurationError(
                f"pulse spacing {period} samples is not an integer "
                f"(fs={self.sample_rate}, f={self.pulse_rate})"
            )

    @property
    def period(self) -> int:
        """Pulse spacing in samples."""
        return int(round(self.sample_rate / self.pulse_rate))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


def generate_pulse_train(spec: PulseTrainSpec) -> AudioBuffer:
    x = np.zeros(spec.n_samples)
    x[:: spec.period] = spec.amplitude
    return AudioBuffer(x, spec.sample_rate)


def _parabolic_peak(mag: np.ndarray, i: int) -> float:
    if i <= 0 or i >= mag.size - 1:
        return float(i)
    a, b, c = mag[i - 1], mag[i], mag[i + 1]
    denom = a - 2.0 * b + c
    if denom == 0.0:
        return float(i)
    return i + 0.5 * (a - c) / denom


def detect_pulses(buf: AudioBuffer, spec: PulseTrainSpec, threshold: float) -> np.ndarray:
    """Locate pulses in a mono buffer.

    The first pulse is the first sample reaching ``threshold``; each further
    pulse is searched in a window of +-T/2 around the previous detection plus
    one period T. Windows whose peak stays below ``threshold`` are gaps and
    come back as NaN; trailing gaps (pulses still in flight at the end of the
    buffer) are dropped. Times are refined with a 3-point parabolic fit.
    """
    x = np.asarray(buf.mono)
    if x.size == 0:
        raise MeasurementError("empty buffer")
    mag = np.abs(x)
    period = spec.period
    half = period // 2

    above = np.flatnonzero(mag >= threshold)
    if above.size == 0:
        raise MeasurementError("no pulse reaches the detection threshold")
    lo = above[0]
    hi = min(x.size, lo + half + 1)
    first = lo + int(np.argmax(mag[lo:hi]))

    times = [_parabolic_peak(mag, first)]
    estimate = float(first)
    while True:
        centre = estimate + period
        lo = int(round(centre)) - half
        if lo >= x.size:
            break
        hi = min(x.size, int(round(centre)) + half + 1)
        lo = max(lo, 0)
        j = lo + int(np.argmax(mag[lo:hi]))
        if mag[j] < threshold:
            times.append(np.nan)
            estimate = centre
        else:
            t = _parabolic_peak(mag, j)
            times.append(t)
            estimate = float(j)
    out = np.asarray(times)
    while out.size and np.isnan(out[-1]):
        out = out[:-1]
    return out


def extract_trajectory(input_times, output_times, spec: PulseTrainSpec) -> DelayTrajectory:
    """Pair pulses in order and return ``output - input`` per pulse.

    Output pulses may be fewer than input pulses (the tail is still inside the
    transport when the recording stops); the input list is truncated to match.
    NaN gaps are filled by linear interpolation of neighbouring delays and
    their indices recorded in ``DelayTrajectory.gaps``.
    """
    t_in = np.asarray(input_times, dtype=np.float64)
    t_out = np.asarray(output_times, dtype=np.float64)
    if np.any(np.isnan(t_in)):
        raise MeasurementError("gaps in the reference pulse train")
    if t_out.size > t_in.size:
        raise MeasurementError(
            f"pulse count mismatch: {t_out.size} output vs {t_in.size} input pulses"
        )
    if t_out.size == 0:
        raise MeasurementError("no output pulses")
    t_in = t_in[: t_out.size]
    delays = t_out - t_in
    gaps = np.flatnonzero(np.isnan(delays))
    if gaps.size:
        ok = np.flatnonzero(~np.isnan(delays))
        if ok.size == 0:
            raise MeasurementError("every output pulse is missing")
        delays[gaps] = np.interp(gaps, ok, delays[ok])
        logger.warning("filled %d missing pulses by interpolation", gaps.size)
    if np.any(delays < 0):
        raise MeasurementError(
            f"negative delay {delays.min():.3f} samples; pulses misdetected"
        )
    return DelayTrajectory(delays, spec.pulse_rate, spec.sample_rate, gaps=gaps)


def measure_trajectory(
    reference: AudioBuffer,
    recorded: AudioBuffer,
    pulse_rate: float = 100.0,
    rel_threshold: float = 0.3,
) -> DelayTrajectory:
    """Full probing pipeline on two mono pulse channels.

    Thresholds are relative to each buffer's peak since the tape path
    changes pulse amplitude.
    """
    spec = PulseTrainSpec(reference.duration, reference.sample_rate, pulse_rate)
    peak_in = float(np.max(np.abs(reference.mono))) if len(reference) else 0.0
    peak_out = float(np.max(np.abs(recorded.mono))) if len(recorded) else 0.0
    if peak_in == 0.0 or peak_out == 0.0:
        raise MeasurementError("silent pulse channel")
    t_in = detect_pulses(reference, spec, rel_threshold * peak_in)
    t_out = detect_pulses(recorded, spec, rel_threshold * peak_out)
    return extract_trajectory(t_in, t_out, spec)
