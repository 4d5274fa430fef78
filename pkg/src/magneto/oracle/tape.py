"""The reference tape machine: record path, transport timing and hiss."""

from __future__ import annotations

import math

import numpy as np
from scipy import signal

from ..signal_core import AudioBuffer, ConfigurationError, DelayTrajectory, apply_time_varying_delay, upsample_trajectory
from .config import TRAJECTORY_RATE, HissParams, OracleConfig, to_sos
from .hysteresis import magnetise


def _unit_lowpassed_noise(rng: np.random.Generator, n: int, cutoff: float, rate: float) -> np.ndarray:
    """Stationary, unit-variance noise lowpassed at ``cutoff`` Hz."""
    cutoff = min(cutoff, 0.45 * rate)
    sos = signal.butter(2, cutoff, fs=rate, output="sos")
    impulse = np.zeros(int(20 * rate / cutoff) + 16)
    impulse[0] = 1.0
    gain = math.sqrt(np.sum(signal.sosfilt(sos, impulse) ** 2))
    settle = impulse.size
    w = rng.standard_normal(n + settle)
    return signal.sosfilt(sos, w)[settle:] / gain


def synth_trajectory(cfg: OracleConfig, length_points: int, seed: int) -> DelayTrajectory:
    """Wow (modulated sinusoid) plus flutter (band-limited noise) around a base delay."""
    if length_points < 1:
        raise ConfigurationError("trajectory needs at least one point")
    if cfg.base_delay_samples < 0:
        raise ConfigurationError("negative mean delay")
    rng = np.random.default_rng(seed)
    k = np.arange(length_points)
    phase0 = rng.uniform(0.0, 2 * np.pi)
    wow = cfg.wow
    slow = _unit_lowpassed_noise(rng, length_points, wow.rate_hz / 4, TRAJECTORY_RATE)
    fast = _unit_lowpassed_noise(rng, length_points, cfg.flutter.bandwidth_hz, TRAJECTORY_RATE)
    values = (
        cfg.base_delay_samples
        + wow.depth_samples * np.sin(2 * np.pi * wow.rate_hz * k / TRAJECTORY_RATE + phase0) * (1 + wow.variance * slow)
        + cfg.flutter.depth_samples * fast
    )
    return DelayTrajectory(np.maximum(values, 0.0), TRAJECTORY_RATE, cfg.sample_rate)


def _pink_sos(fs: float) -> np.ndarray:
    # alternating real poles and zeros, half an octave apart: -3 dB/octave on average
    sections = []
    for i in range(13):
        fp = 5.0 * 2.0**i
        fz = fp * math.sqrt(2.0)
        if fz >= 0.45 * fs:
            break
        b, a = signal.bilinear([1.0 / (2 * np.pi * fz), 1.0], [1.0 / (2 * np.pi * fp), 1.0], fs)
        sections.append([b[0], b[1], 0.0, 1.0, a[1], 0.0])
    return np.array(sections)


def synth_hiss(cfg: OracleConfig | HissParams, length: int, seed: int, fs: int = 44100) -> AudioBuffer:
    """Pink noise plus mains hum (fundamental, 2nd and 3rd harmonic).

    The hum carries ``hum_level`` RMS and the pink part fills the remainder
    so the total RMS equals ``level_rms`` (hum alone when they are equal).
    """
    p = cfg.hiss if isinstance(cfg, OracleConfig) else cfg
    if p is None:
        raise ConfigurationError("oracle has no hiss configured")
    if length < 1:
        raise ConfigurationError("length must be >= 1")
    rng = np.random.default_rng(seed)
    n = np.arange(length)
    rel = np.array([1.0, 0.5, 0.25])
    hum = np.zeros(length)
    if p.hum_level > 0:
        amps = rel / math.sqrt(np.sum(rel**2) / 2) * p.hum_level  # RMS of the sum = hum_level
        for h, amp in enumerate(amps, start=1):
            hum += amp * np.sin(2 * np.pi * h * p.hum_hz * n / fs + rng.uniform(0, 2 * np.pi))
    pink_rms = math.sqrt(max(p.level_rms**2 - p.hum_level**2, 0.0))
    settle = int(fs)
    white = rng.standard_normal(length + settle)
    pink = signal.sosfilt(_pink_sos(fs), white)[settle:]
    pink = pink - pink.mean()
    rms = math.sqrt(np.mean(pink**2))
    out = hum + (pink * (pink_rms / rms) if rms > 0 else 0.0)
    return AudioBuffer(out, fs)


def record_path(x: np.ndarray, cfg: OracleConfig) -> np.ndarray:
    """Pre-filter, drive, hysteresis, post-filter for one channel."""
    h = cfg.hysteresis
    pre = signal.sosfilt(to_sos(cfg.pre_filter), x)
    M, _ = magnetise(cfg.drive_gain * pre, h.M_s, h.a, h.alpha, cfg.effective_k, h.c, h.substeps)
    return signal.sosfilt(to_sos(cfg.post_filter), M)


def process_tape(x: AudioBuffer, cfg: OracleConfig) -> tuple[AudioBuffer, DelayTrajectory | None, dict]:
    """Run audio through the reference machine.

    Returns the output, the exact trajectory applied (``None`` with timing
    disabled) and a metadata dict.
    """
    if x.sample_rate != cfg.sample_rate:
        raise ConfigurationError(f"input at {x.sample_rate} Hz, oracle configured for {cfg.sample_rate} Hz")
    y = np.stack([record_path(ch, cfg) for ch in x.samples])
    out = AudioBuffer(y, x.sample_rate)
    traj = None
    meta: dict = {"seed": cfg.seed, "timing_enabled": cfg.timing_enabled, "hiss": cfg.hiss is not None}
    if cfg.timing_enabled:
        hop = cfg.sample_rate / TRAJECTORY_RATE
        n_points = int(math.ceil(len(x) / hop)) + 1
        traj = synth_trajectory(cfg, n_points, cfg.seed)
        delay = upsample_trajectory(traj, cfg.sample_rate, len(x))
        out = apply_time_varying_delay(out, delay)
        meta["max_delay"] = float(delay.max())
    if cfg.hiss is not None:
        for ch in range(out.channels):
            out.samples[ch] += synth_hiss(cfg.hiss, len(out), cfg.seed + 7919 * (ch + 1), cfg.sample_rate).mono
    return out, traj, meta
