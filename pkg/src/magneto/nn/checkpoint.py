"""Single-file checkpoint container.

Layout: little-endian u64 header length, UTF-8 JSON header, then for every
tensor listed in ``header["tensors"]`` (in order) a u64 byte count followed
by the tensor's values as little-endian float32.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import torch

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path: str | Path,
    architecture: str,
    tensors: Mapping[str, torch.Tensor | np.ndarray],
    *,
    hyperparameters: Mapping[str, Any] | None = None,
    schedule: Mapping[str, Any] | None = None,
    seed: int = 0,
    ema: bool = False,
    extra: Mapping[str, Any] | None = None,
) -> Path:
    path = Path(path)
    arrays = {}
    for name, t in tensors.items():
        a = t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)
        arrays[name] = np.ascontiguousarray(a, dtype="<f4")
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": architecture,
        "hyperparameters": dict(hyperparameters or {}),
        "schedule": dict(schedule) if schedule is not None else None,
        "seed": int(seed),
        "ema": bool(ema),
        "extra": dict(extra or {}),
        "tensors": [{"name": k, "shape": list(a.shape)} for k, a in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for a in arrays.values():
            raw = a.tobytes()
            f.write(struct.pack("<Q", len(raw)))
            f.write(raw)
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, torch.Tensor]]:
    """Return ``(header, tensors)``; tensors come back as float32 torch tensors."""
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise CheckpointError(f"{path}: truncated")
    (hlen,) = struct.unpack_from("<Q", data, 0)
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')!r}")
    pos = 8 + hlen
    tensors: dict[str, torch.Tensor] = {}
    for spec in header["tensors"]:
        if pos + 8 > len(data):
            raise CheckpointError(f"{path}: truncated before {spec['name']}")
        (nbytes,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        shape = tuple(spec["shape"])
        if nbytes != 4 * int(np.prod(shape, dtype=np.int64)) or pos + nbytes > len(data):
            raise CheckpointError(f"{path}: blob size mismatch for {spec['name']}")
        a = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=pos).reshape(shape)
        tensors[spec["name"]] = torch.from_numpy(a.copy())
        pos += nbytes
    return header, tensors


def expect_architecture(header: Mapping[str, Any], *names: str) -> None:
    if header.get("architecture") not in names:
        raise CheckpointError(f"expected architecture {' or '.join(names)}, found {header.get('architecture')!r}")
