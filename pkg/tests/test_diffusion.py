import math
import warnings

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError
from scipy import stats

from magneto.diffusion import (
    HISS_DOMAIN,
    HISS_SCHEDULE,
    HISS_UNET,
    TRAJ_DOMAIN,
    TRAJ_REAL_SCHEDULE,
    TRAJ_TOY_SCHEDULE,
    TRAJ_UNET,
    DiffusionModel,
    DiffusionTrainConfig,
    GaussianDenoiser,
    NoiseSchedule,
    NonFiniteOutput,
    UNet1d,
    UNetConfig,
    chunk_layout,
    count_parameters,
    crossfade,
    ddim_sample,
    denoise,
    generate_noise,
    generate_trajectory,
    load_diffusion,
    log_uniform_sigma,
    loss_weight,
    precondition,
    sample_segments,
    schedule_sigmas,
    train_diffusion,
    training_loss,
)
from magneto.evaluation import long_term_spectrum
from magneto.nn import CheckpointError, load_checkpoint

# -- schedule


def test_two_step_ladder_is_endpoints():
    np.testing.assert_array_equal(schedule_sigmas(HISS_SCHEDULE, 2), [0.1, 5e-5])


def test_three_step_ladder_middle_is_geometric_mean():
    assert schedule_sigmas(HISS_SCHEDULE, 3)[1] == pytest.approx(math.sqrt(0.1 * 5e-5))
    assert schedule_sigmas(HISS_SCHEDULE, 3)[1] == pytest.approx(2.236e-3, rel=1e-3)


def test_single_step_ladder():
    np.testing.assert_array_equal(schedule_sigmas(HISS_SCHEDULE, 1), [0.1])


@given(st.integers(2, 64), st.floats(1e-6, 1e-2), st.floats(2.0, 1e4))
def test_ladder_is_exactly_geometric(n, lo, span):
    sched = NoiseSchedule(sigma_data=1e-3, sigma_min=lo, sigma_max=lo * span, n_steps=n)
    sig = schedule_sigmas(sched)
    assert sig[0] == sched.sigma_max and sig[-1] == sched.sigma_min
    ratios = sig[1:] / sig[:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)
    assert np.all(np.diff(sig) < 0)


def test_schedule_invariants():
    with pytest.raises(ValidationError):
        NoiseSchedule(sigma_data=1, sigma_min=0.5, sigma_max=0.1, n_steps=4)
    with pytest.raises(ValidationError):
        NoiseSchedule(sigma_data=0, sigma_min=0.1, sigma_max=0.5, n_steps=4)
    with pytest.raises(ValidationError):
        NoiseSchedule(sigma_data=1, sigma_min=0.1, sigma_max=0.5, n_steps=0)


def test_schedule_constants():
    assert (HISS_SCHEDULE.sigma_data, HISS_SCHEDULE.sigma_min, HISS_SCHEDULE.sigma_max, HISS_SCHEDULE.n_steps) == (
        8e-4, 5e-5, 0.1, 16)
    assert (TRAJ_TOY_SCHEDULE.sigma_data, TRAJ_TOY_SCHEDULE.sigma_min, TRAJ_TOY_SCHEDULE.sigma_max,
            TRAJ_TOY_SCHEDULE.n_steps) == (6.8e-3, 1e-5, 0.5, 10)
    assert (TRAJ_REAL_SCHEDULE.sigma_data, TRAJ_REAL_SCHEDULE.sigma_max) == (1e-4, 0.01)


# -- preconditioning

def test_precondition_at_sigma_data():
    c_skip, c_out, c_in, _ = precondition(0.3, 0.3)
    assert c_skip == pytest.approx(0.5)
    assert c_out == pytest.approx(0.3 / math.sqrt(2))
    assert c_in == pytest.approx(1 / (0.3 * math.sqrt(2)))


def test_precondition_small_sigma_limit():
    c_skip, c_out, _, _ = precondition(1e-12, 1e-3)
    assert c_skip == pytest.approx(1.0)
    assert c_out < 1e-11


def test_precondition_hiss_values():
    # frozen from direct evaluation of the four formulas
    c_skip, c_out, c_in, c_noise = precondition(0.1, 8e-4)
    assert c_skip == pytest.approx(6.39949e-5, rel=1e-4)
    assert c_out == pytest.approx(7.99974e-4, rel=1e-4)
    assert c_in == pytest.approx(9.99968, rel=1e-5)
    assert c_noise == pytest.approx(-0.575646, rel=1e-5)


def test_precondition_tensor_matches_numpy():
    sig = np.array([1e-4, 1e-2, 0.3])
    for a, b in zip(precondition(sig, 6.8e-3), precondition(torch.from_numpy(sig), 6.8e-3)):
        np.testing.assert_allclose(b.numpy(), a, rtol=1e-12)


def test_loss_weight_formula():
    assert loss_weight(0.1, 8e-4) == pytest.approx((0.01 + 6.4e-7) / (0.1 * 8e-4) ** 2)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-5, 1.0), st.floats(1e-5, 1e-1))
def test_zero_network_gives_skip_scaling(sigma, sigma_data):
    x = torch.randn(2, 1, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    out = denoise(lambda a, c: torch.zeros_like(a), x, sigma, sigma_data)
    c_skip = sigma_data**2 / (sigma**2 + sigma_data**2)
    torch.testing.assert_close(out, c_skip * x)


def test_denoiser_passes_input_at_tiny_sigma():
    x = torch.randn(1, 1, 64, dtype=torch.float64)
    out = denoise(lambda a, c: torch.randn_like(a), x, 1e-12, 1e-3)
    torch.testing.assert_close(out, x, atol=1e-8, rtol=1e-8)


def test_denoiser_nan_aborts():
    with pytest.raises(NonFiniteOutput):
        denoise(lambda a, c: torch.full_like(a, float("nan")), torch.zeros(1, 1, 8), 0.1, 1e-3)


# -- U-Net

def test_unet_budgets():
    assert abs(count_parameters(UNet1d(HISS_UNET)) - 127_000) <= 12_700
    assert abs(count_parameters(UNet1d(TRAJ_UNET)) - 77_000) <= 7_700


def test_unet_zero_at_init_and_any_length():
    net = UNet1d(TRAJ_UNET)
    for n in (1, 37, 512, 777):
        x = torch.randn(2, 1, n)
        out = net(x, torch.zeros(2))
        assert out.shape == x.shape
        assert torch.count_nonzero(out) == 0


def test_unet_seeded_init():
    a, b = UNet1d(TRAJ_UNET, seed=3), UNet1d(TRAJ_UNET, seed=3)
    for (ka, va), (_, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert torch.equal(va, vb), ka


def test_unet_config_validation():
    with pytest.raises(ValidationError):
        UNetConfig(channels=(16, 16), strides=(2,))
    assert HISS_UNET.total_stride == 256 and TRAJ_UNET.total_stride == 8
    assert HISS_UNET.depth == 4 and TRAJ_UNET.depth == 3


# -- training objective

def test_perfect_denoiser_has_zero_loss():
    sched = TRAJ_TOY_SCHEDULE

    def oracle(scaled, c_noise):
        # invert the preconditioning so that D returns the clean (all-zero) batch
        sigma = torch.exp(4 * c_noise).view(-1, 1, 1)
        c_skip, c_out, c_in, _ = precondition(sigma, sched.sigma_data)
        return -c_skip * (scaled / c_in) / c_out

    clean = torch.zeros(4, 1, 64, dtype=torch.float64)
    assert training_loss(oracle, clean, sched, torch.Generator().manual_seed(0)).item() == pytest.approx(0, abs=1e-12)


def test_zero_network_loss_expectation():
    sched = HISS_SCHEDULE
    sigma = 0.01
    gen = torch.Generator().manual_seed(1)
    clean = torch.zeros(64, 1, 2048, dtype=torch.float64)
    loss = training_loss(lambda a, c: torch.zeros_like(a), clean, sched, gen, sigma=torch.tensor(sigma))
    c_skip = sched.sigma_data**2 / (sigma**2 + sched.sigma_data**2)
    expected = loss_weight(sigma, sched.sigma_data) * c_skip**2 * sigma**2
    assert loss.item() == pytest.approx(expected, rel=0.01)


def test_log_uniform_sigma_ks():
    draws = log_uniform_sigma(np.random.default_rng(0), 10_000, HISS_SCHEDULE)
    lo, hi = math.log(5e-5), math.log(0.1)
    p = stats.kstest(np.log(draws), stats.uniform(loc=lo, scale=hi - lo).cdf).pvalue
    assert p > 0.01


def test_training_loss_sigma_draws_are_log_uniform():
    # recover the sigmas training_loss draws by feeding a network that records c_noise
    seen = []

    def spy(a, c_noise):
        seen.append(c_noise.clone())
        return torch.zeros_like(a)

    gen = torch.Generator().manual_seed(2)
    for _ in range(40):
        training_loss(spy, torch.zeros(250, 1, 4), HISS_SCHEDULE, gen)
    log_sigma = 4 * torch.cat(seen).double().numpy()
    lo, hi = math.log(5e-5), math.log(0.1)
    assert stats.kstest(log_sigma, stats.uniform(loc=lo, scale=hi - lo).cdf).pvalue > 0.01


# -- sampler

def test_single_step_zero_denoiser_returns_zero():
    x = ddim_sample(lambda x, s: torch.zeros_like(x), HISS_SCHEDULE, (2, 1, 100), churn=0.0, n_steps=1)
    assert torch.count_nonzero(x) == 0


def test_sampler_is_deterministic_per_seed():
    den = GaussianDenoiser(1e-3)
    a = ddim_sample(den, HISS_SCHEDULE, (2, 1, 256), seed=5, churn=0.0)
    b = ddim_sample(den, HISS_SCHEDULE, (2, 1, 256), seed=5, churn=0.0)
    c = ddim_sample(den, HISS_SCHEDULE, (2, 1, 256), seed=5, churn=0.1)
    d = ddim_sample(den, HISS_SCHEDULE, (2, 1, 256), seed=5, churn=0.1)
    assert torch.equal(a, b) and torch.equal(c, d) and not torch.equal(a, c)


def _euler_variance_factor(sigmas, s):
    # deterministic Euler on a scalar Gaussian: x stays proportional to the initial draw
    k = 1.0
    ladder = list(sigmas) + [0.0]
    for cur, nxt in zip(ladder[:-1], ladder[1:]):
        k *= 1 + (nxt - cur) * (cur / (s**2 + cur**2))
    return (k * sigmas[0]) ** 2 / s**2


@pytest.mark.parametrize("sched", [HISS_SCHEDULE, TRAJ_TOY_SCHEDULE, TRAJ_REAL_SCHEDULE])
def test_gaussian_sampler_matches_scalar_recursion(sched):
    s = sched.sigma_data
    expected = _euler_variance_factor(schedule_sigmas(sched), s)
    x = ddim_sample(GaussianDenoiser(s), sched, (64, 1, 1024), seed=0, churn=0.0, dtype=torch.float64)
    assert float(x.var()) / s**2 == pytest.approx(expected, rel=0.02)


def test_gaussian_sampler_converges_with_many_steps():
    s = HISS_SCHEDULE.sigma_data
    x = ddim_sample(GaussianDenoiser(s), HISS_SCHEDULE, (32, 1, 1024), churn=0.0, n_steps=400, dtype=torch.float64)
    assert float(x.var()) / s**2 == pytest.approx(1.0, abs=0.05)


def test_churn_bounds():
    with pytest.raises(ValueError):
        ddim_sample(GaussianDenoiser(1.0), HISS_SCHEDULE, (1, 1, 8), churn=1.5)


# -- generation from an untrained net (F = 0, so D is the Gaussian posterior mean at sigma_data)

def _untrained(domain, unet, sched):
    return DiffusionModel(UNet1d(unet), sched, domain, 1.0, {})


def test_chunk_layout():
    assert chunk_layout(66150, 66150) == (1, 49612, 16538)
    n, hop, overlap = chunk_layout(441000, 66150)
    assert n == 9 and hop / 44100 == pytest.approx(1.125, abs=1e-4)
    assert (n - 1) * hop + 66150 >= 441000


def test_crossfade_equal_power_keeps_variance():
    rng = np.random.default_rng(0)
    chunks = rng.standard_normal((200, 400))
    out = crossfade(chunks, 300, 100, 199 * 300 + 400)
    # every sample is a unit-power mix of independent unit-variance chunks
    assert out.var() == pytest.approx(1.0, rel=0.02)
    seams = np.concatenate([out[i * 300:i * 300 + 100] for i in range(1, 199)])
    assert seams.var() == pytest.approx(1.0, rel=0.05)


def test_crossfade_single_chunk_is_untouched():
    c = np.random.default_rng(0).standard_normal((1, 50))
    np.testing.assert_array_equal(crossfade(c, 40, 10, 50), c[0])


@pytest.fixture(scope="module")
def untrained_noise():
    model = _untrained(HISS_DOMAIN, HISS_UNET, HISS_SCHEDULE)
    return model, generate_noise(model, 10.0, seed=0, n_steps=4)


def test_noise_single_segment(untrained_noise):
    model, _ = untrained_noise
    buf = generate_noise(model, 66150 / 44100, seed=1, n_steps=2)
    direct = sample_segments(model, 1, seed=1, n_steps=2)[0]
    np.testing.assert_allclose(buf.mono, direct)


def test_noise_seams_have_no_energy_dip(untrained_noise):
    model, buf = untrained_noise
    x = buf.mono
    assert len(x) == 441000
    n, hop, overlap = chunk_layout(441000, 66150)
    win = int(0.05 * 44100)
    ref = np.sqrt(np.mean(x**2))
    for i in range(1, n):
        for start in range(i * hop - win, i * hop + overlap, win // 2):
            seg = x[max(start, 0):start + win]
            assert abs(20 * np.log10(np.sqrt(np.mean(seg**2)) / ref)) < 1.0


def test_noise_seeds_differ_spectra_match(untrained_noise):
    model, a = untrained_noise
    b = generate_noise(model, 10.0, seed=1, n_steps=4)
    assert not np.allclose(a.mono, b.mono)
    sa, sb = long_term_spectrum(a), long_term_spectrum(b)
    band = sa.select(100, 10000)
    assert np.max(np.abs(sa.level_db[band] - sb.level_db[band])) < 2.0


def test_trajectory_mean_and_fluctuation():
    model = _untrained(TRAJ_DOMAIN, TRAJ_UNET, TRAJ_TOY_SCHEDULE)
    raw = sample_segments(model, 16, seed=0)
    assert abs(raw.mean()) < 0.1 * raw.std()
    traj = generate_trajectory(model, 2000, 441.0, seed=0)
    assert traj.rate == 100 and traj.values.size == 2000
    assert abs(traj.values.mean() - 441.0) < 0.5


def test_trajectory_clamp_warning():
    model = _untrained(TRAJ_DOMAIN, TRAJ_UNET, TRAJ_TOY_SCHEDULE)
    with pytest.warns(RuntimeWarning, match="clamped"):
        traj = generate_trajectory(model, 600, 0.0, seed=0)
    assert np.all(traj.values >= 0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        generate_trajectory(model, 600, 50.0, seed=0)


def test_generators_check_domain():
    from magneto.signal_core import ConfigurationError
    traj_model = _untrained(TRAJ_DOMAIN, TRAJ_UNET, TRAJ_TOY_SCHEDULE)
    with pytest.raises(ConfigurationError):
        generate_noise(traj_model, 1.0)
    with pytest.raises(ConfigurationError):
        generate_trajectory(_untrained(HISS_DOMAIN, HISS_UNET, HISS_SCHEDULE), 10, 100.0)


# -- training loop and checkpoints

@pytest.fixture(scope="module")
def short_traj_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("diff") / "traj.ckpt"
    rng = np.random.default_rng(0)
    k = np.arange(4000)
    signals = [300 + 20 * np.sin(2 * np.pi * k / 100 + rng.uniform(0, 6)) + rng.standard_normal(4000)
               for _ in range(3)]
    cfg = DiffusionTrainConfig(batch=4, max_steps=20, checkpoint_every=10, seed=0)
    train_diffusion(signals, TRAJ_DOMAIN, out, cfg)
    return out, signals, cfg


def test_training_checkpoint_header(short_traj_run):
    path, _, _ = short_traj_run
    header, tensors = load_checkpoint(path)
    assert header["architecture"] == "traj-unet-v1" and header["ema"] is True
    assert header["schedule"]["sigma_data"] == 6.8e-3
    assert header["hyperparameters"]["domain"]["segment_len"] == 512
    assert header["extra"]["step"] == 20
    assert any(k.startswith("ema/") for k in tensors) and any(k.startswith("params/") for k in tensors)


def test_ema_and_raw_weights_differ(short_traj_run):
    path, _, _ = short_traj_run
    ema, raw = load_diffusion(path), load_diffusion(path, use_ema=False)
    diffs = [not torch.equal(a, b) for a, b in zip(ema.net.state_dict().values(), raw.net.state_dict().values())]
    assert any(diffs)
    assert ema.schedule == TRAJ_TOY_SCHEDULE and ema.domain == TRAJ_DOMAIN


def test_resume_matches_uninterrupted(short_traj_run, tmp_path):
    _, signals, cfg = short_traj_run
    straight = train_diffusion(signals, TRAJ_DOMAIN, tmp_path / "a.ckpt", cfg.model_copy(update={"max_steps": 12}))
    train_diffusion(signals, TRAJ_DOMAIN, tmp_path / "b.ckpt", cfg.model_copy(update={"max_steps": 6}))
    resumed = train_diffusion(signals, TRAJ_DOMAIN, tmp_path / "b.ckpt", cfg.model_copy(update={"max_steps": 12}),
                              resume=True)
    ta, tb = load_checkpoint(straight)[1], load_checkpoint(resumed)[1]
    for k in ta:
        torch.testing.assert_close(ta[k], tb[k], rtol=1e-5, atol=1e-6)


def test_loaded_model_generates(short_traj_run):
    model = load_diffusion(short_traj_run[0])
    traj = generate_trajectory(model, 700, 300.0, seed=1, n_steps=4)
    assert traj.values.size == 700 and np.all(np.isfinite(traj.values))


def test_wrong_architecture_rejected(tmp_path):
    from magneto.nn import save_checkpoint
    save_checkpoint(tmp_path / "x.ckpt", "tape-rnn-v1", {})
    with pytest.raises(CheckpointError):
        load_diffusion(tmp_path / "x.ckpt")


def test_rescaled_training_stores_scale(tmp_path):
    signals = [np.random.default_rng(0).standard_normal(3000) * 5.0]
    cfg = DiffusionTrainConfig(batch=2, max_steps=1, rescale_to_sigma_data=True)
    model = load_diffusion(train_diffusion(signals, TRAJ_DOMAIN, tmp_path / "r.ckpt", cfg))
    assert model.data_scale == pytest.approx(6.8e-3 / 5.0, rel=0.1)


def test_train_config_requires_budget():
    with pytest.raises(ValidationError):
        DiffusionTrainConfig()
