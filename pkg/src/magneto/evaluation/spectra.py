"""Long-term band spectra and trajectory spectrum statistics."""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.signal import welch

from ..signal_core import AudioBuffer

WELCH_NFFT = 8192
REFERENCE_HZ = 1000.0


@dataclasses.dataclass
class BandSpectrum:
    centers: np.ndarray  # Hz, nominal fractional-octave centres
    level_db: np.ndarray  # 10 log10 of the mean PSD in each band
    band_power: np.ndarray  # integrated power per band
    total_power: float  # mean square of the input

    def select(self, lo: float, hi: float) -> np.ndarray:
        return (self.centers >= lo) & (self.centers <= hi)

    def level_at(self, freq: float) -> float:
        return float(self.level_db[np.argmin(np.abs(np.log2(self.centers / freq)))])


def _as_channels(buf: AudioBuffer | np.ndarray, fs: int | None) -> tuple[np.ndarray, int]:
    if isinstance(buf, AudioBuffer):
        return buf.samples, buf.sample_rate
    if fs is None:
        raise ValueError("sample rate required for raw arrays")
    x = np.asarray(buf, dtype=np.float64)
    return np.atleast_2d(x), fs


def long_term_spectrum(buf: AudioBuffer | np.ndarray, fs: int | None = None, fraction: int = 6,
                       nfft: int = WELCH_NFFT) -> BandSpectrum:
    """Welch PSD (Hann, 50% overlap) averaged into ``1/fraction``-octave bands.

    Every FFT bin belongs to exactly one band (bins beyond the end bands
    join them), so band powers sum to the broadband power. Multichannel
    input is power-averaged over channels.
    """
    x, fs = _as_channels(buf, fs)
    if x.shape[-1] < fs:
        raise ValueError("need at least one second of signal")
    f, pxx = welch(x, fs=fs, window="hann", nperseg=nfft, noverlap=nfft // 2, scaling="density", axis=-1)
    pxx = pxx.mean(axis=0)
    df = f[1] - f[0]
    k = np.round(fraction * np.log2(np.maximum(f, df) / REFERENCE_HZ)).astype(int)
    k_lo = int(np.round(fraction * np.log2(max(20.0, df) / REFERENCE_HZ)))
    k = np.clip(k, k_lo, None)
    bands = np.unique(k)
    power = np.array([pxx[k == b].sum() * df for b in bands])
    mean_psd = np.array([pxx[k == b].mean() for b in bands])
    with np.errstate(divide="ignore"):
        level = 10 * np.log10(mean_psd)
    return BandSpectrum(REFERENCE_HZ * 2.0 ** (bands / fraction), level, power, float(np.mean(x**2)))


@dataclasses.dataclass
class TrajectorySpectrumStats:
    freqs: np.ndarray
    mean_db: np.ndarray
    std_db: np.ndarray

    def peak_frequency(self, lo: float = 0.0) -> float:
        sel = self.freqs > lo
        return float(self.freqs[sel][np.argmax(self.mean_db[sel])])


def trajectory_spectrum_stats(batch: np.ndarray, rate: float = 100.0) -> TrajectorySpectrumStats:
    """Bin-wise mean and standard deviation (dB) of Hann-windowed magnitude spectra."""
    b = np.asarray(batch, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] < 2:
        raise ValueError("need a (batch >= 2, length) array of equal-length trajectories")
    b = b - b.mean(axis=1, keepdims=True)
    mag = np.abs(np.fft.rfft(b * np.hanning(b.shape[1]), axis=1))
    db = 20 * np.log10(np.maximum(mag, 1e-12))
    # spread measured about the first member so identical inputs give exactly zero
    spread = (db - db[:1]).std(axis=0)
    return TrajectorySpectrumStats(np.fft.rfftfreq(b.shape[1], 1 / rate), db.mean(axis=0), spread)
