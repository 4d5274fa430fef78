import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from magneto.evaluation import (
    MrStftConfig,
    SweepSpec,
    band_slice,
    esr_loss,
    long_term_spectrum,
    loop_area,
    mrstft_loss,
    ramped_sine_analysis,
    read_analysis_csv,
    sha256_of,
    swept_sine_analysis,
    trajectory_spectrum_stats,
    write_analysis_csv,
)
from magneto.oracle import OracleConfig, record_path
from magneto.oracle.config import to_sos
from magneto.signal_core import ConfigurationError

FS = 44100


# -- MR-STFT

def test_mrstft_config_invariants():
    with pytest.raises(ValueError):
        MrStftConfig(fft_sizes=(512,), hop_sizes=(600,), win_lengths=(512,))
    with pytest.raises(ValueError):
        MrStftConfig(fft_sizes=(512, 1024), hop_sizes=(64,), win_lengths=(256,))


def test_mrstft_identity_is_exactly_zero(rng):
    x = rng.standard_normal(8000)
    assert mrstft_loss(x, x) == 0.0
    assert esr_loss(torch.tensor(x), torch.tensor(x)).item() == 0.0


def test_mrstft_one_sample_shift_is_small(rng):
    x = rng.standard_normal(8000)
    shifted = mrstft_loss(np.roll(x, 1), x)
    silent = mrstft_loss(np.zeros_like(x), x)
    assert shifted < 0.05 * silent


def test_mrstft_matches_numpy_route(rng):
    # single resolution, evaluated with an independent scipy STFT
    cfg = MrStftConfig(fft_sizes=(512,), hop_sizes=(128,), win_lengths=(256,))
    p, t = rng.standard_normal(4000), rng.standard_normal(4000)

    def mag(x):
        padded = np.pad(x, 256, mode="reflect")
        win = np.zeros(512)
        win[128:384] = np.hanning(257)[:-1]  # periodic Hann, centred in the frame
        frames = np.lib.stride_tricks.sliding_window_view(padded, 512)[::128]
        return np.maximum(np.abs(np.fft.rfft(frames * win, axis=1)), 1e-8)

    sp, st_ = mag(p), mag(t)
    expected = np.linalg.norm(st_ - sp) / np.linalg.norm(st_) + np.mean(np.abs(np.log(st_) - np.log(sp)))
    assert mrstft_loss(p, t, cfg) == pytest.approx(expected, rel=1e-6)


def test_mrstft_rejects_silent_and_short(rng):
    with pytest.raises(ValueError):
        mrstft_loss(rng.standard_normal(4096), np.zeros(4096))
    with pytest.raises(ValueError):
        mrstft_loss(np.ones(1000), np.ones(1000))
    with pytest.raises(ValueError):
        mrstft_loss(np.ones(4096), np.ones(4097))


def test_mrstft_is_differentiable(rng):
    p = torch.tensor(rng.standard_normal(4096), requires_grad=True)
    loss = mrstft_loss(p, torch.tensor(rng.standard_normal(4096)))
    loss.backward()
    assert torch.isfinite(p.grad).all() and p.grad.abs().sum() > 0


# -- ramped sine

def test_loop_area_of_unit_square():
    assert loop_area(np.array([0, 1, 1, 0.0]), np.array([0, 0, 1, 1.0])) == pytest.approx(1.0)


def test_identity_gives_straight_zero_area_loops():
    res = ramped_sine_analysis(lambda x: x, f0=50, cycles=10)
    assert res.area < 1e-9
    assert res.width < 1e-9
    for x, y in res.loops:
        np.testing.assert_array_equal(x, y)
    assert res.deadzone_ratio == pytest.approx(1.0)


def test_static_tanh_encloses_no_area():
    res = ramped_sine_analysis(lambda x: np.tanh(3 * x), f0=50, cycles=10)
    assert res.relative_area < 1e-6
    assert res.saturation == pytest.approx(np.tanh(3.0), rel=1e-3)


def test_oracle_full_drive_loop_and_deadzone():
    cfg = OracleConfig(timing_enabled=False)
    res = ramped_sine_analysis(lambda x: record_path(x, cfg), f0=50, cycles=20)
    assert res.area > 0 and res.width > 0
    assert res.deadzone_ratio < 0.5


def test_ramped_sine_length_check():
    with pytest.raises(ValueError):
        ramped_sine_analysis(lambda x: x[:-1])


# -- swept sine

SHORT_SWEEP = SweepSpec(duration=3.0)


def test_identity_sweep_is_flat_with_no_harmonics():
    res = swept_sine_analysis(lambda x: x, SHORT_SWEEP)
    band = band_slice(res, 2 * SHORT_SWEEP.f_start, SHORT_SWEEP.f_end / 2)
    assert np.max(np.abs(res.magnitude_db[band])) < 0.1
    hband = band_slice(res, 2 * SHORT_SWEEP.f_start, SHORT_SWEEP.f_end / 10)
    for h in res.harmonic_db.values():
        assert np.max(h[hband]) < -100


@pytest.mark.parametrize("amplitude", [0.3, 0.6])
def test_cubic_harmonic_and_fundamental(amplitude):
    spec = SweepSpec(duration=3.0, amplitude=amplitude, max_order=3)
    res = swept_sine_analysis(lambda x: x + 0.1 * x**3, spec)
    band = band_slice(res, 100, 4000)
    fund = 20 * np.log10(1 + 0.075 * amplitude**2)
    third = 20 * np.log10(0.025 * amplitude**2)
    assert np.median(res.magnitude_db[band]) == pytest.approx(fund, abs=0.1)
    assert np.median(res.harmonic_db[3][band]) == pytest.approx(third, abs=0.5)


def test_second_harmonic_lands_at_its_predelay():
    spec = SweepSpec(duration=3.0, max_order=2)
    res = swept_sine_analysis(lambda x: x + 0.2 * x**2, spec)
    ir = np.abs(res.impulse_response)
    expected = res.ir_zero - spec.harmonic_delay(2) * FS
    search = slice(res.ir_zero - int(0.8 * spec.duration * FS), res.ir_zero - int(0.01 * FS))
    found = search.start + np.argmax(ir[search])
    assert abs(found - expected) / FS < 2e-3


def test_overlapping_harmonic_windows_rejected():
    with pytest.raises(ConfigurationError):
        swept_sine_analysis(lambda x: x, SweepSpec(duration=0.2, max_order=5))


def test_sweep_spec_invariants():
    with pytest.raises(ValueError):
        SweepSpec(f_start=100, f_end=50)
    with pytest.raises(ValueError):
        SweepSpec(f_end=30000)


def test_oracle_fundamental_follows_post_filter():
    cfg = OracleConfig(timing_enabled=False, drive_gain=1e-2, pre_filter=[])
    spec = SweepSpec(duration=3.0, amplitude=0.1, max_order=3)
    res = swept_sine_analysis(lambda x: record_path(x, cfg), spec)
    band = band_slice(res, 50, 10000)
    _, h = signal.sosfreqz(to_sos(cfg.post_filter), worN=res.freqs[band], fs=FS)
    shape = res.magnitude_db[band] - 20 * np.log10(np.abs(h))
    # the small-signal hysteresis gain is frequency independent, leaving only an offset
    assert np.max(np.abs(shape - np.median(shape))) < 1.0


def test_oracle_distortion_rises_with_level():
    cfg = OracleConfig(timing_enabled=False)
    levels = []
    for amplitude in (0.05, 0.2, 0.8):
        res = swept_sine_analysis(lambda x: record_path(x, cfg),
                                  SweepSpec(duration=3.0, amplitude=amplitude, max_order=3))
        band = band_slice(res, 200, 2000)
        levels.append(np.median(res.harmonic_db[3][band] - res.magnitude_db[band]))
    assert levels[0] < levels[1] < levels[2]


# -- long-term spectra

def test_white_noise_is_flat(rng):
    spec = long_term_spectrum(rng.standard_normal(60 * FS), FS)
    band = spec.select(100, 10000)
    level = spec.level_db[band]
    assert np.max(np.abs(level - level.mean())) < 1.5


def test_tone_has_single_dominant_band():
    t = np.arange(5 * FS) / FS
    spec = long_term_spectrum(np.sin(2 * np.pi * 1000 * t), FS)
    top = np.argsort(spec.level_db)[::-1]
    assert spec.centers[top[0]] == pytest.approx(1000.0)
    assert spec.level_db[top[0]] - spec.level_db[top[1]] > 10


def test_pink_noise_slope(rng):
    # pink reference shaped directly in the frequency domain
    n = 60 * FS
    coeffs = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / FS)
    coeffs[1:] /= np.sqrt(f[1:])
    coeffs[0] = 0
    spec = long_term_spectrum(np.fft.irfft(coeffs, n), FS)
    band = spec.select(100, 5000)
    slope = np.polyfit(np.log2(spec.centers[band]), spec.level_db[band], 1)[0]
    assert slope == pytest.approx(-3.0, abs=1.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 10))
def test_band_powers_sum_to_signal_power(seed, scale):
    x = scale * np.random.default_rng(seed).standard_normal(2 * FS)
    spec = long_term_spectrum(x, FS)
    assert abs(10 * np.log10(spec.band_power.sum() / spec.total_power)) < 0.5


def test_long_term_spectrum_needs_one_second():
    with pytest.raises(ValueError):
        long_term_spectrum(np.ones(FS - 1), FS)


# -- trajectory spectrum statistics

def test_identical_trajectories_have_zero_spread(rng):
    v = rng.standard_normal(1000)
    stats = trajectory_spectrum_stats(np.stack([v, v, v]))
    np.testing.assert_array_equal(stats.std_db, 0.0)


def test_random_phase_sinusoids_peak_at_their_frequency(rng):
    t = np.arange(2000) / 100.0
    batch = np.stack([np.sin(2 * np.pi * 1.5 * t + p) for p in rng.uniform(0, 2 * np.pi, 8)])
    stats = trajectory_spectrum_stats(batch, rate=100.0)
    assert stats.peak_frequency() == pytest.approx(1.5, abs=0.05)


def test_trajectory_stats_needs_a_batch():
    with pytest.raises(ValueError):
        trajectory_spectrum_stats(np.ones((1, 100)))


# -- reports

def test_csv_round_trip_with_meta_header(tmp_path, rng):
    x = rng.standard_normal(10)
    meta = {"analysis": "spectrum", "input_sha256": sha256_of(x)}
    path = write_analysis_csv(tmp_path / "out" / "a.csv", {"freq": np.arange(10), "level": x}, meta)
    assert path.read_text().splitlines()[0].startswith("# meta: {")
    got_meta, cols = read_analysis_csv(path)
    assert got_meta == meta
    np.testing.assert_array_equal(cols["level"], x)


def test_csv_rejects_ragged_columns(tmp_path):
    with pytest.raises(ValueError):
        write_analysis_csv(tmp_path / "a.csv", {"a": [1, 2], "b": [1]}, {})


def test_file_and_array_hashes(tmp_path):
    p = tmp_path / "f.bin"
    p.write_bytes(b"abc")
    assert sha256_of(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert sha256_of(np.array([1, 2])) == sha256_of(np.array([1.0, 2.0]))
