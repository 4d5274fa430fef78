"""Jiles-Atherton magnetisation, integrated with explicit Euler steps in H."""

from __future__ import annotations

import dataclasses
import math

import numba
import numpy as np

_DEN_EPS = 1e-12


@dataclasses.dataclass
class HysteresisState:
    M: float = 0.0
    H_prev: float = 0.0


@numba.njit(cache=True)
def _dM_dH(H, M, direction, M_s, a, alpha, k, c):
    He = H + alpha * M
    t = math.tanh(He / a)
    M_an = M_s * t
    dM_an = M_s / a * (1.0 - t * t)
    diff = M_an - M
    den = (1.0 - c) * direction * k - alpha * diff
    if abs(den) < _DEN_EPS:
        return c * dM_an
    return (1.0 - c) * diff / den + c * dM_an


def hysteresis_step(state: HysteresisState, H: float, M_s, a, alpha, k, c) -> tuple[HysteresisState, float]:
    """Advance the magnetisation from ``state.H_prev`` to ``H``."""
    dH = H - state.H_prev
    direction = 1.0 if dH >= 0 else -1.0
    slope = _dM_dH(state.H_prev, state.M, direction, M_s, a, alpha, k, c)
    M = min(max(state.M + slope * dH, -M_s), M_s)
    return HysteresisState(M, H), M


@numba.njit(cache=True)
def _run(h, M0, H0, M_s, a, alpha, k, c, substeps):
    out = np.empty(h.size)
    M = M0
    Hp = H0
    for i in range(h.size):
        dH = (h[i] - Hp) / substeps
        for _ in range(substeps):
            direction = 1.0 if dH >= 0 else -1.0
            M = M + _dM_dH(Hp, M, direction, M_s, a, alpha, k, c) * dH
            if M > M_s:
                M = M_s
            elif M < -M_s:
                M = -M_s
            Hp = Hp + dH
        Hp = h[i]
        out[i] = M
    return out, M, Hp


def magnetise(
    H: np.ndarray,
    M_s: float = 1.0,
    a: float = 0.3,
    alpha: float = 0.016,
    k: float = 0.3,
    c: float = 0.1,
    substeps: int = 1,
    state: HysteresisState | None = None,
) -> tuple[np.ndarray, HysteresisState]:
    """Run the step chain over a field sequence.

    Each sample's field increment is split into ``substeps`` equal Euler
    steps (``substeps=1`` is exactly one :func:`hysteresis_step` per sample).
    """
    state = state or HysteresisState()
    out, M, Hp = _run(
        np.ascontiguousarray(H, dtype=np.float64), state.M, state.H_prev,
        M_s, a, alpha, k, c, int(substeps),
    )
    return out, HysteresisState(M, Hp)
