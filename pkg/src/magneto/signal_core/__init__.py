"""Deterministic signal primitives: buffers, pulse probing, delay line."""

from .buffers import (
    AudioBuffer,
    ConfigurationError,
    DelayTrajectory,
    next_pow2,
    read_trajectory_csv,
    read_wav,
    write_trajectory_csv,
    write_wav,
)
from .delay import (
    DelayLineState,
    DelayRangeError,
    apply_time_varying_delay,
    delay_weights,
    delay_weights_torch,
    demodulate,
    tv_delay_torch,
    upsample_trajectory,
)
from .pulses import (
    MeasurementError,
    PulseTrainSpec,
    detect_pulses,
    extract_trajectory,
    generate_pulse_train,
    measure_trajectory,
)

__all__ = [
    "AudioBuffer",
    "ConfigurationError",
    "DelayLineState",
    "DelayRangeError",
    "DelayTrajectory",
    "MeasurementError",
    "PulseTrainSpec",
    "apply_time_varying_delay",
    "delay_weights",
    "delay_weights_torch",
    "demodulate",
    "detect_pulses",
    "extract_trajectory",
    "generate_pulse_train",
    "measure_trajectory",
    "next_pow2",
    "read_trajectory_csv",
    "read_wav",
    "tv_delay_torch",
    "upsample_trajectory",
    "write_trajectory_csv",
    "write_wav",
]
