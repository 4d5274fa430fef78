"""Diffusion generators for tape hiss and delay-trajectory fluctuations."""

from .generate import chunk_layout, crossfade, generate_noise, generate_trajectory, sample_segments
from .sampler import (
    GaussianDenoiser,
    NonFiniteOutput,
    PreconditionedDenoiser,
    ddim_sample,
    denoise,
    sample_variance_ratio,
    training_loss,
)
from .schedule import (
    HISS_SCHEDULE,
    TRAJ_REAL_SCHEDULE,
    TRAJ_TOY_SCHEDULE,
    NoiseSchedule,
    log_uniform_sigma,
    loss_weight,
    precondition,
    schedule_sigmas,
)
from .train import (
    ARCHITECTURES,
    HISS_DOMAIN,
    TRAJ_DOMAIN,
    CropSampler,
    DiffusionDomain,
    DiffusionModel,
    DiffusionTrainConfig,
    TrainingDiverged,
    domain_defaults,
    load_diffusion,
    train_diffusion,
)
from .unet import HISS_UNET, TRAJ_UNET, UNet1d, UNetConfig, count_parameters, noise_features

__all__ = [n for n in dir() if not n.startswith("_")]
