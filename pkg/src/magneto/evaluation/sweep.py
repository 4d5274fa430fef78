"""Exponential swept-sine measurement of linear and harmonic responses."""

from __future__ import annotations

import dataclasses
import math
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal.windows import tukey

from ..signal_core import ConfigurationError, next_pow2

HARMONIC_WINDOW = 0.05  # seconds
REGULARIZATION = 1e-8


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    f_start: float = Field(20.0, gt=0)
    f_end: float = Field(20000.0, gt=0)
    duration: float = Field(5.0, gt=0)
    amplitude: float = Field(0.5, gt=0)
    sample_rate: int = 44100
    max_order: int = Field(5, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if not self.f_start < self.f_end < self.sample_rate / 2:
            raise ValueError("need 0 < f_start < f_end < fs/2")
        return self

    @property
    def rate(self) -> float:
        """Sweep time constant ``L``: instantaneous frequency is ``f_start * exp(t / L)``."""
        return self.duration / math.log(self.f_end / self.f_start)

    def harmonic_delay(self, order: int) -> float:
        """Seconds by which the order-``k`` impulse response precedes the linear one."""
        return self.rate * math.log(order)


@dataclasses.dataclass
class SweepResult:
    freqs: np.ndarray
    magnitude_db: np.ndarray
    harmonic_db: dict[int, np.ndarray]  # order -> level relative to the input, on the input-frequency axis
    impulse_response: np.ndarray  # full deconvolution, linear IR at index ``ir_zero``
    ir_zero: int
    spec: SweepSpec


def exp_sweep(spec: SweepSpec) -> np.ndarray:
    """Unit-amplitude exponential sweep."""
    n = int(round(spec.duration * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    L = spec.rate
    return np.sin(2 * np.pi * spec.f_start * L * (np.exp(t / L) - 1))


def inverse_sweep(spec: SweepSpec) -> np.ndarray:
    """Time-reversed sweep with the -6 dB/octave envelope that whitens the product."""
    s = exp_sweep(spec)
    t = np.arange(s.size) / spec.sample_rate
    return s[::-1] * np.exp(-t / spec.rate)


def _check_windows(spec: SweepSpec) -> None:
    half = HARMONIC_WINDOW / 2
    centers = [spec.harmonic_delay(k) for k in range(1, spec.max_order + 1)]
    for a, b in zip(centers[:-1], centers[1:]):
        if b - a < 2 * half:
            raise ConfigurationError(
                f"harmonic windows overlap ({1e3 * (b - a):.1f} ms spacing); use a longer sweep or fewer orders")
    if centers[-1] + half > spec.duration:
        raise ConfigurationError("sweep too short for the requested harmonic orders")


def swept_sine_analysis(system: Callable[[np.ndarray], np.ndarray], spec: SweepSpec | None = None) -> SweepResult:
    spec = spec or SweepSpec()
    _check_windows(spec)
    fs = spec.sample_rate
    x = spec.amplitude * exp_sweep(spec)
    y = np.asarray(system(x), dtype=np.float64)
    if y.shape != x.shape:
        raise ValueError("system changed the signal length")
    win = int(round(HARMONIC_WINDOW * fs))
    nfft = 4 * next_pow2(win)
    inv = inverse_sweep(spec)
    taper = tukey(win, 0.5)
    freqs = np.fft.rfftfreq(nfft, 1 / fs)

    def windowed(h: np.ndarray, order: int) -> np.ndarray:
        c = zero - int(round(spec.harmonic_delay(order) * fs))
        seg = h[c - win // 2:c - win // 2 + win] * taper
        # rotate so the impulse sits at index 0 and the spectrum carries no linear phase
        seg = np.roll(np.pad(seg, (0, nfft - win)), -(win // 2))
        return np.abs(np.fft.rfft(seg))

    # Equalize by the sweep deconvolved with its own inverse, which removes
    # the band-edge ripple of the plain inverse filter (regularized outside the band).
    m = next_pow2(2 * x.size)
    inv_f = np.fft.rfft(inv, m)
    ref_f = np.fft.rfft(exp_sweep(spec), m) * inv_f
    eq = np.conj(ref_f) / (np.abs(ref_f) ** 2 + REGULARIZATION * np.max(np.abs(ref_f)) ** 2)
    # circular result: linear response at lag 0, harmonics at negative lags; centre lag 0
    ir = np.roll(np.fft.irfft(np.fft.rfft(y, m) * inv_f * eq, m), m // 2) / spec.amplitude
    zero = m // 2

    def response(order: int) -> np.ndarray:
        return windowed(ir, order)

    with np.errstate(divide="ignore"):
        magnitude = 20 * np.log10(np.maximum(response(1), 1e-12))
        harmonics = {}
        for k in range(2, spec.max_order + 1):
            mag_k = response(k)
            # order-k energy at output frequency k*f belongs to input frequency f
            harmonics[k] = 20 * np.log10(np.maximum(np.interp(k * freqs, freqs, mag_k, right=0.0), 1e-12))
    return SweepResult(freqs, magnitude, harmonics, ir, zero, spec)


def band_slice(result: SweepResult, lo: float, hi: float) -> np.ndarray:
    return (result.freqs >= lo) & (result.freqs <= hi)
