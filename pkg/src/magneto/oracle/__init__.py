"""Reference tape machine used to generate training and evaluation data."""

from .config import FlutterParams, HissParams, HysteresisParams, OracleConfig, WowParams
from .dataset import (
    DatasetManifest,
    HissDatasetConfig,
    SplitSpec,
    TrajectoryDatasetConfig,
    build_dataset,
    build_hiss_dataset,
    build_trajectory_dataset,
    load_manifest,
    program_material,
)
from .hysteresis import HysteresisState, hysteresis_step, magnetise
from .tape import process_tape, record_path, synth_hiss, synth_trajectory

__all__ = [
    "DatasetManifest",
    "HissDatasetConfig",
    "TrajectoryDatasetConfig",
    "build_hiss_dataset",
    "build_trajectory_dataset",
    "FlutterParams",
    "HissParams",
    "HysteresisParams",
    "HysteresisState",
    "OracleConfig",
    "SplitSpec",
    "WowParams",
    "build_dataset",
    "hysteresis_step",
    "load_manifest",
    "magnetise",
    "process_tape",
    "program_material",
    "record_path",
    "synth_hiss",
    "synth_trajectory",
]
