"""Metrics and analyses for comparing tape models with their targets."""

from .hysteresis import RampedSineResult, loop_area, ramped_sine, ramped_sine_analysis
from .metrics import MrStftConfig, esr_loss, mrstft_loss
from .report import read_analysis_csv, sha256_of, write_analysis_csv
from .spectra import BandSpectrum, TrajectorySpectrumStats, long_term_spectrum, trajectory_spectrum_stats
from .sweep import SweepResult, SweepSpec, band_slice, exp_sweep, inverse_sweep, swept_sine_analysis

__all__ = [n for n in dir() if not n.startswith("_")]
