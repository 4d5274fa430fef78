import sys

import numpy as np
import pytest
import torch
from scipy import signal

torch.set_num_threads(1)


def bandlimited_noise(rng: np.random.Generator, n: int, cutoff_fraction: float, fs: int = 44100) -> np.ndarray:
    """Unit-RMS white noise lowpassed (8th-order Butterworth) at ``cutoff_fraction * fs``."""
    sos = signal.butter(8, cutoff_fraction * fs, fs=fs, output="sos")
    x = signal.sosfiltfilt(sos, rng.standard_normal(n + 2000))[1000:-1000]
    return x / x.std()


def smooth_trajectory(rng: np.random.Generator, n: int, mean: float = 40.0, depth: float = 20.0,
                      max_slope: float = 0.45) -> np.ndarray:
    """Per-sample delay: a random slow sinusoid whose slope stays below ``max_slope``."""
    f = rng.uniform(0.5, 5.0) / 44100
    amp = min(depth, max_slope / (2 * np.pi * f))
    return mean + amp * np.sin(2 * np.pi * f * np.arange(n) + rng.uniform(0, 2 * np.pi))


def snr_db(ref: np.ndarray, est: np.ndarray) -> float:
    return float(10 * np.log10(np.sum(ref**2) / np.sum((ref - est) ** 2)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(results, key=lambda k: int(k[1:])):
        ok, detail = results[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
