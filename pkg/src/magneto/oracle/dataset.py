"""Synthetic program material and train/val/test dataset generation."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import signal

from ..signal_core import AudioBuffer, PulseTrainSpec, generate_pulse_train, write_trajectory_csv, write_wav
from .config import TRAJECTORY_RATE, HissParams, OracleConfig
from .tape import process_tape, synth_hiss, synth_trajectory

logger = logging.getLogger(__name__)


class SplitSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)
    name: str
    minutes: float = Field(gt=0)


class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    oracle_config: OracleConfig = OracleConfig()
    seed: int = 0
    splits: list[SplitSpec] = [
        SplitSpec(name="train", minutes=60),
        SplitSpec(name="val", minutes=20),
        SplitSpec(name="test", minutes=15),
    ]
    out_dir: str = "data"
    file_seconds: float = Field(30.0, gt=0)


def _envelope(n: int, fs: int, rng) -> np.ndarray:
    kind = rng.integers(3)
    if kind == 0:  # linear ramp up, as in the ramped-sine test
        return np.linspace(0.0, 1.0, n)
    fade = min(n // 2, int(0.01 * fs))
    env = np.ones(n)
    env[:fade] = np.linspace(0, 1, fade)
    env[n - fade:] = np.linspace(1, 0, fade)
    if kind == 2:
        env *= np.exp(-np.arange(n) / (rng.uniform(0.1, 1.0) * fs))
    return env


def _event(n: int, fs: int, rng) -> np.ndarray:
    t = np.arange(n) / fs
    kind = rng.integers(4)
    if kind == 0:  # tone
        f = np.exp(rng.uniform(np.log(40), np.log(10000)))
        x = np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    elif kind == 1:  # exponential chirp
        f0, f1 = np.exp(rng.uniform(np.log(40), np.log(10000), size=2))
        x = signal.chirp(t, f0, t[-1], f1, method="logarithmic", phi=rng.uniform(0, 360))
    elif kind == 2:  # band-passed noise burst
        fc = np.exp(rng.uniform(np.log(60), np.log(8000)))
        lo, hi = fc / 1.5, min(fc * 1.5, 0.45 * fs)
        sos = signal.butter(2, [lo, hi], btype="bandpass", fs=fs, output="sos")
        x = signal.sosfilt(sos, rng.standard_normal(n))
    else:  # amplitude-modulated tone
        f = np.exp(rng.uniform(np.log(40), np.log(5000)))
        fm = rng.uniform(0.5, 12)
        x = (0.6 + 0.4 * np.sin(2 * np.pi * fm * t)) * np.sin(2 * np.pi * f * t)
    return x * _envelope(n, fs, rng)


def program_material(seconds: float, fs: int, seed: int) -> np.ndarray:
    """Mixtures of tones, chirps, noise bursts and AM tones, peaks up to 0 dBFS."""
    rng = np.random.default_rng(seed)
    total = int(round(seconds * fs))
    out = np.zeros(total)
    pos = 0
    while pos < total:
        n = min(int(rng.uniform(0.5, 3.0) * fs), total - pos)
        seg = sum(_event(n, fs, rng) for _ in range(rng.integers(1, 4)))
        peak = np.max(np.abs(seg))
        if peak > 0:
            seg *= 10 ** (rng.uniform(-30, 0) / 20) / peak
        out[pos:pos + n] = seg
        pos += n
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_dataset(manifest: DatasetManifest, base_dir: str | Path | None = None) -> Path:
    """Generate every split and write ``manifest.lock.json``; returns its path.

    Per split, files ``input_###.wav`` (left: program, right: pulse train),
    ``target_###.wav`` (both channels through the oracle) and, with timing
    enabled, ``traj_###.csv`` holding the exact trajectory applied.
    """
    root = Path(manifest.out_dir)
    if base_dir is not None and not root.is_absolute():
        root = Path(base_dir) / root
    root.mkdir(parents=True, exist_ok=True)
    cfg = manifest.oracle_config
    fs = cfg.sample_rate
    pulse = generate_pulse_train(PulseTrainSpec(manifest.file_seconds, fs, TRAJECTORY_RATE)).mono

    lock = {"manifest": json.loads(manifest.model_dump_json()), "files": {}}
    file_counter = 0
    for split in manifest.splits:
        split_dir = root / split.name
        split_dir.mkdir(exist_ok=True)
        n_files = max(1, int(round(split.minutes * 60 / manifest.file_seconds)))
        entries = []
        for i in range(n_files):
            seed = manifest.seed * 1_000_003 + file_counter
            file_counter += 1
            x = AudioBuffer.stereo(program_material(manifest.file_seconds, fs, seed), pulse, fs)
            y, traj, _ = process_tape(x, cfg.model_copy(update={"seed": seed}))
            names = {"input": f"input_{i:03d}.wav", "target": f"target_{i:03d}.wav"}
            write_wav(split_dir / names["input"], x)
            write_wav(split_dir / names["target"], y)
            if traj is not None:
                names["trajectory"] = f"traj_{i:03d}.csv"
                write_trajectory_csv(split_dir / names["trajectory"], traj)
            entry = {"seed": seed, **names}
            entry["sha256"] = {k: _sha256(split_dir / v) for k, v in names.items()}
            entries.append(entry)
            logger.info("%s/%s written", split.name, names["input"])
        lock["files"][split.name] = entries
    lock_path = root / "manifest.lock.json"
    lock_path.write_text(json.dumps(lock, indent=2, sort_keys=True) + "\n")
    return lock_path


def load_manifest(path: str | Path) -> DatasetManifest:
    return DatasetManifest.model_validate_json(Path(path).read_text())


class HissDatasetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hiss: HissParams = HissParams()
    minutes: float = Field(10.0, gt=0)
    file_seconds: float = Field(30.0, gt=0)
    sample_rate: int = 44100
    seed: int = 0
    out_dir: str = "hiss"


class TrajectoryDatasetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    oracle_config: OracleConfig = OracleConfig()
    n_segments: int = Field(2000, ge=1)
    segment_points: int = Field(512, ge=2)
    segments_per_file: int = Field(50, ge=1)
    seed: int = 0
    out_dir: str = "trajectories"


def _resolve(out_dir: str, base_dir) -> Path:
    root = Path(out_dir)
    if base_dir is not None and not root.is_absolute():
        root = Path(base_dir) / root
    root.mkdir(parents=True, exist_ok=True)
    return root


def _write_lock(root: Path, cfg: BaseModel, entries: list[dict]) -> Path:
    for e in entries:
        e["sha256"] = _sha256(root / e["file"])
    lock = {"manifest": json.loads(cfg.model_dump_json()), "files": entries}
    path = root / "manifest.lock.json"
    path.write_text(json.dumps(lock, indent=2, sort_keys=True) + "\n")
    return path


def build_hiss_dataset(cfg: HissDatasetConfig, base_dir: str | Path | None = None) -> Path:
    """Mono ``hiss_###.wav`` files of oracle tape noise."""
    root = _resolve(cfg.out_dir, base_dir)
    n_files = max(1, int(round(cfg.minutes * 60 / cfg.file_seconds)))
    n = int(round(cfg.file_seconds * cfg.sample_rate))
    entries = []
    for i in range(n_files):
        seed = cfg.seed * 1_000_003 + i
        name = f"hiss_{i:03d}.wav"
        write_wav(root / name, synth_hiss(cfg.hiss, n, seed, cfg.sample_rate))
        entries.append({"file": name, "seed": seed})
    return _write_lock(root, cfg, entries)


def build_trajectory_dataset(cfg: TrajectoryDatasetConfig, base_dir: str | Path | None = None) -> Path:
    """``traj_###.csv`` files of oracle delay trajectories totalling ``n_segments`` segments."""
    root = _resolve(cfg.out_dir, base_dir)
    oracle = cfg.oracle_config.model_copy(update={"timing_enabled": True})
    entries = []
    remaining, i = cfg.n_segments, 0
    while remaining > 0:
        k = min(cfg.segments_per_file, remaining)
        seed = cfg.seed * 1_000_003 + i
        name = f"traj_{i:03d}.csv"
        write_trajectory_csv(root / name, synth_trajectory(oracle, k * cfg.segment_points, seed))
        entries.append({"file": name, "seed": seed, "segments": k})
        remaining -= k
        i += 1
    return _write_lock(root, cfg, entries)
