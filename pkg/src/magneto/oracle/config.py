"""Configuration for the reference tape machine."""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

TRAJECTORY_RATE = 100.0


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _biquad(kind: str, f0: float, fs: float, q: float = math.sqrt(0.5), gain_db: float = 0.0):
    """RBJ cookbook biquad as ``[b0, b1, b2, a1, a2]`` with a0 normalised to 1."""
    w = 2 * math.pi * f0 / fs
    cw, sw = math.cos(w), math.sin(w)
    alpha = sw / (2 * q)
    A = 10 ** (gain_db / 40)
    if kind == "lowpass":
        b = [(1 - cw) / 2, 1 - cw, (1 - cw) / 2]
        a = [1 + alpha, -2 * cw, 1 - alpha]
    elif kind == "highpass":
        b = [(1 + cw) / 2, -(1 + cw), (1 + cw) / 2]
        a = [1 + alpha, -2 * cw, 1 - alpha]
    elif kind == "lowshelf":
        sa = 2 * math.sqrt(A) * alpha
        b = [A * ((A + 1) - (A - 1) * cw + sa), 2 * A * ((A - 1) - (A + 1) * cw), A * ((A + 1) - (A - 1) * cw - sa)]
        a = [(A + 1) + (A - 1) * cw + sa, -2 * ((A - 1) + (A + 1) * cw), (A + 1) + (A - 1) * cw - sa]
    elif kind == "highshelf":
        sa = 2 * math.sqrt(A) * alpha
        b = [A * ((A + 1) + (A - 1) * cw + sa), -2 * A * ((A - 1) + (A + 1) * cw), A * ((A + 1) + (A - 1) * cw - sa)]
        a = [(A + 1) - (A - 1) * cw + sa, 2 * ((A - 1) - (A + 1) * cw), (A + 1) - (A - 1) * cw - sa]
    else:
        raise ValueError(f"unknown biquad kind {kind!r}")
    return [b[0] / a[0], b[1] / a[0], b[2] / a[0], a[1] / a[0], a[2] / a[0]]


def default_pre_filter(fs: float = 44100.0) -> list[list[float]]:
    # record amplifier: coupling highpass and a mild treble pre-emphasis
    return [_biquad("highpass", 25.0, fs), _biquad("highshelf", 4000.0, fs, gain_db=2.0)]


def default_post_filter(fs: float = 44100.0) -> list[list[float]]:
    # playback: DC block, head bump, gap/spacing loss
    return [
        _biquad("highpass", 20.0, fs),
        _biquad("lowshelf", 90.0, fs, gain_db=3.0),
        _biquad("lowpass", 14000.0, fs),
    ]


def to_sos(sections: list[list[float]]) -> np.ndarray:
    if not sections:
        return np.array([[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]])
    return np.array([[b0, b1, b2, 1.0, a1, a2] for b0, b1, b2, a1, a2 in sections])


class HysteresisParams(_Strict):
    M_s: float = Field(1.0, gt=0)
    a: float = Field(0.3, gt=0)
    alpha: float = Field(0.016, ge=0)
    k: float = Field(0.3, gt=0)
    c: float = Field(0.1, ge=0, le=1)
    substeps: int = Field(8, ge=1)


class WowParams(_Strict):
    depth_samples: float = Field(20.0, ge=0)
    rate_hz: float = Field(1.0, gt=0)
    variance: float = Field(0.3, ge=0)

    @model_validator(mode="after")
    def _nyquist(self):
        if self.rate_hz >= TRAJECTORY_RATE / 2:
            raise ValueError("wow rate must stay below half the pulse rate")
        return self


class FlutterParams(_Strict):
    depth_samples: float = Field(2.0, ge=0)
    bandwidth_hz: float = Field(15.0, gt=0, lt=TRAJECTORY_RATE / 2)


class HissParams(_Strict):
    level_rms: float = Field(8e-4, ge=0)
    hum_hz: float = Field(50.0, gt=0)
    hum_level: float = Field(2.8e-4, ge=0)


class OracleConfig(_Strict):
    sample_rate: int = 44100
    hysteresis: HysteresisParams = HysteresisParams()
    drive_gain: float = Field(1.0, ge=0)
    bias_amount: float = Field(0.0, ge=0, le=1)
    pre_filter: list[list[float]] = Field(default_factory=default_pre_filter)
    post_filter: list[list[float]] = Field(default_factory=default_post_filter)
    timing_enabled: bool = True
    wow: WowParams = WowParams()
    flutter: FlutterParams = FlutterParams()
    base_delay_samples: float = 300.0
    hiss: HissParams | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        for sec in list(self.pre_filter) + list(self.post_filter):
            if len(sec) != 5:
                raise ValueError("biquad sections are [b0, b1, b2, a1, a2]")
        return self

    @property
    def effective_k(self) -> float:
        """Coercivity after bias: more bias, narrower loop."""
        return self.hysteresis.k * (1.0 - 0.9 * self.bias_amount)

    @property
    def max_delay(self) -> float:
        """Generous bound on the trajectory peak, used to size delay lines."""
        return self.base_delay_samples + self.wow.depth_samples * (1 + 4 * self.wow.variance) + 5 * self.flutter.depth_samples
