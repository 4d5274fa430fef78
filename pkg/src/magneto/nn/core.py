"""Parameter stores, the GRU cell, 1-D convolution and finite-difference checks.

Analytic gradients come from torch autograd; :func:`gradcheck` is the
independent central-difference oracle for them.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Callable, Iterable, Mapping

import numpy as np
import torch
import torch.nn.functional as F

GRU_KEYS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_n", "U_n", "b_in", "b_hn")


class ParamStore(OrderedDict):
    """Named parameter tensors with fixed shapes, plus seed and dtype tags."""

    def __init__(self, items: Iterable[tuple[str, torch.Tensor]] = (), seed: int = 0, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.seed = seed
        self.dtype = dtype
        for name, value in items:
            self[name] = value

    def __setitem__(self, name: str, value: torch.Tensor) -> None:
        if name in self and tuple(self[name].shape) != tuple(value.shape):
            raise ValueError(f"shape of {name!r} is fixed at {tuple(self[name].shape)}")
        super().__setitem__(name, value)

    @classmethod
    def from_module(cls, module: torch.nn.Module, seed: int = 0) -> "ParamStore":
        """Live view on a module's parameters (tensors are shared, not copied)."""
        params = list(module.named_parameters())
        dtype = params[0][1].dtype if params else torch.float32
        return cls(params, seed=seed, dtype=dtype)

    def clone(self) -> "ParamStore":
        return ParamStore(((k, v.detach().clone()) for k, v in self.items()), self.seed, self.dtype)

    def numel(self) -> int:
        return sum(v.numel() for v in self.values())


def init_gru_params(input_size: int, hidden: int, seed: int = 0, dtype=torch.float64) -> ParamStore:
    """Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) init, functional layout."""
    g = torch.Generator().manual_seed(seed)
    bound = 1.0 / math.sqrt(hidden)
    shapes = {
        "W_z": (hidden, input_size), "U_z": (hidden, hidden), "b_z": (hidden,),
        "W_r": (hidden, input_size), "U_r": (hidden, hidden), "b_r": (hidden,),
        "W_n": (hidden, input_size), "U_n": (hidden, hidden), "b_in": (hidden,), "b_hn": (hidden,),
    }
    store = ParamStore(seed=seed, dtype=dtype)
    for name in GRU_KEYS:
        store[name] = ((torch.rand(shapes[name], generator=g, dtype=dtype) * 2 - 1) * bound).requires_grad_()
    return store


def gru_cell(params: Mapping[str, torch.Tensor], h: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """One GRU update; ``h`` is ``(..., hidden)``, ``x`` is ``(..., input)``.

    The reset gate scales the recurrent term (including its bias) before tanh.
    """
    if x.shape[-1] != params["W_z"].shape[1] or h.shape[-1] != params["U_z"].shape[0]:
        raise ValueError(f"GRU shape mismatch: x {tuple(x.shape)}, h {tuple(h.shape)}")
    p = params
    z = torch.sigmoid(x @ p["W_z"].T + h @ p["U_z"].T + p["b_z"])
    r = torch.sigmoid(x @ p["W_r"].T + h @ p["U_r"].T + p["b_r"])
    n = torch.tanh(x @ p["W_n"].T + p["b_in"] + r * (h @ p["U_n"].T + p["b_hn"]))
    return (1 - z) * n + z * h


def gru_params_from_torch(gru: torch.nn.GRU) -> dict[str, torch.Tensor]:
    """Functional view of a single-layer ``torch.nn.GRU`` (gate order r, z, n)."""
    H = gru.hidden_size
    wi, wh = gru.weight_ih_l0, gru.weight_hh_l0
    bi, bh = gru.bias_ih_l0, gru.bias_hh_l0
    return {
        "W_r": wi[:H], "W_z": wi[H:2 * H], "W_n": wi[2 * H:],
        "U_r": wh[:H], "U_z": wh[H:2 * H], "U_n": wh[2 * H:],
        "b_r": bi[:H] + bh[:H], "b_z": bi[H:2 * H] + bh[H:2 * H],
        "b_in": bi[2 * H:], "b_hn": bh[2 * H:],
    }


def conv1d(params: Mapping[str, torch.Tensor], x: torch.Tensor, stride: int = 1, dilation: int = 1) -> torch.Tensor:
    """Cross-correlation with bias; zero "same" padding (odd kernels).

    ``x`` is ``(batch, channels, time)`` or ``(channels, time)``.
    """
    w, b = params["weight"], params.get("bias")
    if x.shape[-2] != w.shape[1]:
        raise ValueError(f"conv1d expects {w.shape[1]} input channels, got {x.shape[-2]}")
    k = w.shape[-1]
    pad = dilation * (k - 1) // 2
    squeeze = x.dim() == 2
    y = F.conv1d(x.unsqueeze(0) if squeeze else x, w, b, stride=stride, padding=pad, dilation=dilation)
    return y[0] if squeeze else y


def he_uniform_(w: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
    fan_in = w.shape[1] * int(np.prod(w.shape[2:]))
    bound = math.sqrt(6.0 / fan_in)
    with torch.no_grad():
        w.copy_((torch.rand(w.shape, generator=generator, dtype=w.dtype) * 2 - 1) * bound)
    return w


def gradcheck(
    fn: Callable[[], torch.Tensor],
    params: Iterable[torch.Tensor] | Mapping[str, torch.Tensor],
    eps: float = 1e-5,
    max_coords: int = 400,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central differences.

    ``fn`` takes no arguments and reads ``params`` (which are perturbed in
    place). When there are more than ``max_coords`` coordinates a random
    subset of that size is checked. The relative error of a coordinate is
    ``|a - n| / max(|a|, |n|, 1e-3 * max|a|)`` so that components that are
    numerically zero do not dominate.
    """
    tensors = list(params.values()) if isinstance(params, Mapping) else list(params)
    grads = torch.autograd.grad(fn(), tensors, allow_unused=True)
    grads = [torch.zeros_like(t) if g is None else g for t, g in zip(tensors, grads)]

    coords = [(ti, j) for ti, t in enumerate(tensors) for j in range(t.numel())]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        coords = [coords[i] for i in rng.choice(len(coords), size=max_coords, replace=False)]

    analytic = np.empty(len(coords))
    numeric = np.empty(len(coords))
    with torch.no_grad():
        for c, (ti, j) in enumerate(coords):
            flat = tensors[ti].view(-1)
            orig = flat[j].item()
            flat[j] = orig + eps
            f_plus = fn().item()
            flat[j] = orig - eps
            f_minus = fn().item()
            flat[j] = orig
            numeric[c] = (f_plus - f_minus) / (2 * eps)
            analytic[c] = grads[ti].reshape(-1)[j].item()
    scale = max(np.max(np.abs(analytic)), 1e-300)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3 * scale)
    return float(np.max(np.abs(analytic - numeric) / denom))
