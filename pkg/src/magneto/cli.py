"""Command-line entry point: ``magneto <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 measurement
failure, 5 training failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import pydantic
import torch
from pydantic import BaseModel

from . import diffusion as dif
from . import evaluation as ev
from . import nonlinear as nl
from . import oracle
from .nn import CheckpointError, NonFiniteGradient, load_checkpoint
from .signal_core import (
    AudioBuffer,
    ConfigurationError,
    DelayRangeError,
    DelayTrajectory,
    MeasurementError,
    apply_time_varying_delay,
    demodulate,
    measure_trajectory,
    read_trajectory_csv,
    read_wav,
    upsample_trajectory,
    write_trajectory_csv,
    write_wav,
)

logger = logging.getLogger("magneto")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_MEASURE, EXIT_TRAIN = 0, 2, 3, 4, 5


class RnnRunConfig(nl.TapeRnnConfig):
    data_dir: str
    out_dir: str = "runs/rnn"
    scheme: nl.train.Scheme = "supervised2"


class DiffusionRunConfig(dif.DiffusionTrainConfig):
    data_dir: str
    out_dir: str = "runs/diffusion"
    schedule: dif.NoiseSchedule | None = None
    unet: dif.UNetConfig | None = None


PATH_FIELDS = ("data_dir", "out_dir")


def load_config(path: str | None, model: type[BaseModel], overrides: dict | None = None) -> BaseModel:
    """Strict JSON config; relative paths are taken relative to the config file."""
    data = {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        data = json.loads(p.read_text())
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: top level must be a JSON object")
        base = p.resolve().parent
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in PATH_FIELDS:
        if isinstance(data.get(key), str) and not Path(data[key]).is_absolute():
            data[key] = str(base / data[key])
    return model.model_validate(data)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------- gen-data

def cmd_gen_data(args) -> int:
    kinds = {
        "tape": (oracle.DatasetManifest, oracle.build_dataset),
        "hiss": (oracle.HissDatasetConfig, oracle.build_hiss_dataset),
        "traj": (oracle.TrajectoryDatasetConfig, oracle.build_trajectory_dataset),
    }
    model, build = kinds[args.kind]
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    base = Path(args.config).resolve().parent if args.config else Path.cwd()
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out_dir is not None:
        data["out_dir"] = str(Path(args.out_dir).resolve())
    if args.timing is not None:
        if args.kind != "tape":
            raise ConfigurationError("--timing only applies to tape datasets")
        data.setdefault("oracle_config", {})["timing_enabled"] = args.timing == "on"
    cfg = model.model_validate(data)
    print(build(cfg, base_dir=base))
    return EXIT_OK


# ---------------------------------------------------------------- measure

def _pulse_channel(buf: AudioBuffer, channel: int | None) -> AudioBuffer:
    ch = channel if channel is not None else (1 if buf.channels > 1 else 0)
    if ch >= buf.channels:
        raise ConfigurationError(f"channel {ch} not present ({buf.channels} channels)")
    return AudioBuffer(buf.channel(ch), buf.sample_rate)


def cmd_measure(args) -> int:
    a, b = read_wav(args.input), read_wav(args.output)
    if a.sample_rate != b.sample_rate:
        raise ConfigurationError("sample rates differ")
    traj = measure_trajectory(_pulse_channel(a, args.channel), _pulse_channel(b, args.channel),
                              pulse_rate=args.rate, rel_threshold=args.threshold)
    write_trajectory_csv(args.out, traj)
    v = traj.values
    _print_json({"points": int(v.size), "mean": float(v.mean()), "std": float(v.std()),
                 "min": float(v.min()), "max": float(v.max()),
                 "gaps": int(0 if traj.gaps is None else len(traj.gaps)), "out": str(args.out)})
    return EXIT_OK


# ---------------------------------------------------------------- train

def _wav_signals(root: Path) -> list[np.ndarray]:
    files = sorted(root.rglob("*.wav"))
    if not files:
        raise FileNotFoundError(f"no WAV files under {root}")
    out = []
    for f in files:
        buf = read_wav(f)
        out += [buf.channel(c) for c in range(buf.channels)]
    return out


def _traj_signals(root: Path) -> list[np.ndarray]:
    files = sorted(root.rglob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no trajectory CSV files under {root}")
    return [read_trajectory_csv(f).values for f in files]


def cmd_train(args) -> int:
    if args.model == "rnn":
        cfg = load_config(args.config, RnnRunConfig, {"scheme": args.scheme})
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        train = nl.load_split(cfg.data_dir, "train", cfg.trajectory_source)
        val = nl.load_split(cfg.data_dir, "val", cfg.trajectory_source)
        tcfg = nl.TapeRnnConfig(**cfg.model_dump(exclude={"data_dir", "out_dir", "scheme"}))
        ckpt = nl.train_supervised(train, val, tcfg, cfg.scheme, out / "model.ckpt",
                                   log_path=out / "train_log.csv", resume=args.resume)
        model, header = nl.load_model(ckpt)
        warmup = header["hyperparameters"]["warmup"]
        metrics = {"val": nl.evaluate(model, val, warmup, cfg.eval_segment)}
        if (Path(cfg.data_dir) / "test").is_dir():
            metrics["test"] = nl.evaluate(model, nl.load_split(cfg.data_dir, "test", cfg.trajectory_source),
                                          warmup, cfg.eval_segment)
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
        _print_json({"checkpoint": str(ckpt), **metrics})
        return EXIT_OK

    if args.scheme is not None:
        raise ConfigurationError("--scheme only applies to rnn training")
    kind = "hiss" if args.model == "hiss" else "trajectory"
    cfg = load_config(args.config, DiffusionRunConfig)
    domain, _, _ = dif.domain_defaults(kind)
    signals = _wav_signals(Path(cfg.data_dir)) if kind == "hiss" else _traj_signals(Path(cfg.data_dir))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = dif.DiffusionTrainConfig(**cfg.model_dump(exclude={"data_dir", "out_dir", "schedule", "unet"}))
    ckpt = dif.train_diffusion(signals, domain, out / f"{args.model}.ckpt", tcfg, unet_cfg=cfg.unet,
                               sched=cfg.schedule, resume=args.resume)
    header, _ = load_checkpoint(ckpt)
    _print_json({"checkpoint": str(ckpt), **header["extra"]})
    return EXIT_OK


# ---------------------------------------------------------------- render

def _load_trajectory(spec: str, n_samples: int, fs: int, seed: int, mean_delay: float) -> np.ndarray | None:
    if spec == "off":
        return None
    if spec.endswith(".csv"):
        traj = read_trajectory_csv(spec)
    else:
        model = dif.load_diffusion(spec)
        hop = fs / model.domain.sample_rate
        traj = dif.generate_trajectory(model, int(math.ceil(n_samples / hop)) + 1, mean_delay, seed=seed,
                                       audio_sample_rate=fs)
    if traj.audio_sample_rate != fs:
        raise ConfigurationError(f"trajectory is for {traj.audio_sample_rate} Hz audio, input is {fs} Hz")
    return upsample_trajectory(traj, fs, n_samples)


def cmd_render(args) -> int:
    x = read_wav(args.input)
    fs = x.sample_rate
    model, _ = nl.load_model(args.rnn)
    delay = _load_trajectory(args.traj, len(x), fs, args.seed, args.mean_delay)
    hiss_model = None
    if args.hiss != "off":
        hiss_model = dif.load_diffusion(args.hiss)
        if int(hiss_model.domain.sample_rate) != fs:
            raise ConfigurationError(f"hiss model is for {hiss_model.domain.sample_rate:g} Hz, input is {fs} Hz")
    channels = []
    for c in range(x.channels):
        y, _ = nl.tape_rnn_forward(model, x.channel(c))
        if delay is not None:
            y = apply_time_varying_delay(AudioBuffer(y, fs), delay).mono
        if hiss_model is not None:
            y = y + dif.generate_noise(hiss_model, len(x) / fs, seed=args.seed * 1_000_003 + c).mono[: y.size]
        channels.append(y)
    write_wav(args.out, AudioBuffer(np.stack(channels), fs))
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------- eval

def evaluate_files(pred: AudioBuffer, target: AudioBuffer, traj: DelayTrajectory | None) -> dict:
    """ESR and MR-STFT of an undelayed prediction in demodulated and delayed modes."""
    if pred.sample_rate != target.sample_rate:
        raise ConfigurationError("sample rates differ")
    if len(pred) != len(target):
        raise ConfigurationError(f"length mismatch: {len(pred)} vs {len(target)} samples")
    p, t = pred.channel(0), target.channel(0)
    if traj is None:
        esr, stft = ev.esr_loss(p, t), ev.mrstft_loss(p, t)
        return {"esr_demod": esr, "esr_delayed": esr, "stft_demod": stft, "stft_delayed": stft}
    delay = upsample_trajectory(traj, pred.sample_rate, len(pred))
    delayed = apply_time_varying_delay(AudioBuffer(p, pred.sample_rate), delay).mono
    t_demod = demodulate(AudioBuffer(t, target.sample_rate), delay).mono
    # the demodulated target runs out where the delay reaches past the end of the file
    usable = len(t) - (int(math.ceil(delay.max())) + 1)
    if usable <= 0:
        raise ConfigurationError("delay longer than the file")
    return {
        "esr_demod": ev.esr_loss(p[:usable], t_demod[:usable]),
        "esr_delayed": ev.esr_loss(delayed, t),
        "stft_demod": ev.mrstft_loss(p[:usable], t_demod[:usable]),
        "stft_delayed": ev.mrstft_loss(delayed, t),
    }


def cmd_eval(args) -> int:
    traj = read_trajectory_csv(args.traj) if args.traj else None
    metrics = evaluate_files(read_wav(args.pred), read_wav(args.target), traj)
    if args.out:
        Path(args.out).write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    _print_json(metrics)
    return EXIT_OK


# ---------------------------------------------------------------- analyze

def _system(args):
    """Processing function under test: an RNN checkpoint or the oracle record path."""
    if (args.rnn is None) == (args.oracle is None):
        raise ConfigurationError("give exactly one of --rnn or --oracle")
    if args.rnn:
        model, _ = nl.load_model(args.rnn)
        return lambda x: nl.tape_rnn_forward(model, x)[0], {"rnn": args.rnn, "rnn_sha256": ev.sha256_of(args.rnn)}
    cfg = oracle.OracleConfig() if args.oracle == "default" else load_config(args.oracle, oracle.OracleConfig)
    return (lambda x: oracle.record_path(x, cfg)), {"oracle": json.loads(cfg.model_dump_json())}


def cmd_analyze(args) -> int:
    meta = {"analysis": args.analysis}
    if args.analysis == "ramped":
        system, info = _system(args)
        r = ev.ramped_sine_analysis(system, f0=args.f0, cycles=args.cycles, peak=args.peak)
        x = np.concatenate([lx for lx, _ in r.loops])
        y = np.concatenate([ly for _, ly in r.loops])
        cycle = np.concatenate([np.full(lx.size, i) for i, (lx, _) in enumerate(r.loops)])
        meta.update(info, f0=args.f0, cycles=args.cycles, peak=args.peak, area=r.area,
                    relative_area=r.relative_area, width=r.width, saturation=r.saturation,
                    deadzone_ratio=r.deadzone_ratio)
        ev.write_analysis_csv(args.out, {"cycle": cycle, "input": x, "output": y}, meta)
    elif args.analysis == "sweep":
        system, info = _system(args)
        spec = ev.SweepSpec(f_start=args.f_start, f_end=args.f_end, duration=args.duration,
                            amplitude=args.amplitude)
        r = ev.swept_sine_analysis(system, spec)
        cols = {"freq_hz": r.freqs, "fundamental_db": r.magnitude_db}
        cols.update({f"h{k}_db": v for k, v in r.harmonic_db.items()})
        meta.update(info, sweep=spec.model_dump())
        ev.write_analysis_csv(args.out, cols, meta)
    elif args.analysis == "spectrum":
        buf = read_wav(args.inputs[0])
        s = ev.long_term_spectrum(buf, fraction=args.fraction)
        meta.update(fraction=args.fraction, input=args.inputs[0], input_sha256=ev.sha256_of(args.inputs[0]))
        ev.write_analysis_csv(args.out, {"center_hz": s.centers, "level_db": s.level_db,
                                         "band_power": s.band_power}, meta)
    else:  # trajstats
        segs = []
        for f in args.inputs:
            v = read_trajectory_csv(f).values
            segs += [v[i:i + args.segment] for i in range(0, v.size - args.segment + 1, args.segment)]
        if len(segs) < 2:
            raise ConfigurationError("need at least two full segments")
        st = ev.trajectory_spectrum_stats(np.stack(segs), rate=args.rate)
        meta.update(segment=args.segment, rate=args.rate, n_segments=len(segs),
                    inputs={f: ev.sha256_of(f) for f in args.inputs})
        ev.write_analysis_csv(args.out, {"freq_hz": st.freqs, "mean_db": st.mean_db, "std_db": st.std_db}, meta)
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------- sample

def cmd_sample(args) -> int:
    model = dif.load_diffusion(args.checkpoint)
    if model.domain.kind == "hiss":
        duration = args.duration or model.domain.segment_len / model.domain.sample_rate
        buf = dif.generate_noise(model, duration, seed=args.seed, churn=args.churn, n_steps=args.steps)
        write_wav(args.out, buf)
    else:
        n = args.points or model.domain.segment_len
        traj = dif.generate_trajectory(model, n, args.mean_delay, seed=args.seed, churn=args.churn,
                                       n_steps=args.steps)
        write_trajectory_csv(args.out, traj)
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="magneto", description="Tape-machine emulation toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an oracle dataset")
    g.add_argument("--config", help="JSON config (dataset manifest)")
    g.add_argument("--kind", choices=["tape", "hiss", "traj"], default="tape")
    g.add_argument("--timing", choices=["on", "off"], help="override oracle timing effects")
    g.add_argument("--out-dir", help="override the output directory")
    g.add_argument("--seed", type=int, help="override the dataset seed")
    g.set_defaults(func=cmd_gen_data)

    m = sub.add_parser("measure", help="measure a delay trajectory from pulse-train recordings")
    m.add_argument("input", help="WAV holding the emitted pulse train")
    m.add_argument("output", help="WAV holding the recorded pulse train")
    m.add_argument("--rate", type=float, default=100.0, help="pulse rate in Hz")
    m.add_argument("--channel", type=int, help="pulse channel (default: 1 for stereo, 0 for mono)")
    m.add_argument("--threshold", type=float, default=0.3, help="detection threshold relative to the peak")
    m.add_argument("-o", "--out", default="traj.csv", help="trajectory CSV to write")
    m.set_defaults(func=cmd_measure)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("model", choices=["rnn", "hiss", "traj"])
    t.add_argument("--config", required=True, help="JSON run config")
    t.add_argument("--scheme", choices=["supervised1", "supervised2"], help="rnn alignment scheme")
    t.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("render", help="run the full emulation chain on a WAV file")
    r.add_argument("input")
    r.add_argument("--rnn", required=True, help="nonlinear-block checkpoint")
    r.add_argument("--traj", default="off", help="trajectory checkpoint, trajectory CSV, or 'off'")
    r.add_argument("--hiss", default="off", help="hiss checkpoint or 'off'")
    r.add_argument("--mean-delay", type=float, default=300.0, help="mean delay for generated trajectories")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("-o", "--out", required=True)
    r.set_defaults(func=cmd_render)

    e = sub.add_parser("eval", help="ESR and MR-STFT metrics of an undelayed prediction")
    e.add_argument("pred")
    e.add_argument("target")
    e.add_argument("traj", nargs="?", help="trajectory CSV for demodulated/delayed modes")
    e.add_argument("-o", "--out", help="metrics JSON to write")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("analyze", help="analyses emitting CSV")
    a.add_argument("analysis", choices=["ramped", "sweep", "spectrum", "trajstats"])
    a.add_argument("inputs", nargs="*", help="WAV (spectrum) or trajectory CSVs (trajstats)")
    a.add_argument("--rnn", help="RNN checkpoint under test (ramped, sweep)")
    a.add_argument("--oracle", nargs="?", const="default", help="oracle record path under test, optional config")
    a.add_argument("--f0", type=float, default=50.0)
    a.add_argument("--cycles", type=int, default=20)
    a.add_argument("--peak", type=float, default=1.0)
    a.add_argument("--f-start", type=float, default=20.0)
    a.add_argument("--f-end", type=float, default=20000.0)
    a.add_argument("--duration", type=float, default=5.0)
    a.add_argument("--amplitude", type=float, default=0.5)
    a.add_argument("--fraction", type=int, default=6, help="bands per octave")
    a.add_argument("--segment", type=int, default=512, help="trajectory segment length")
    a.add_argument("--rate", type=float, default=100.0, help="trajectory rate in Hz")
    a.add_argument("-o", "--out", required=True)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sample", help="raw diffusion sampling to WAV (hiss) or CSV (trajectory)")
    s.add_argument("checkpoint")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", type=int, help="sampler steps (default: checkpoint schedule)")
    s.add_argument("--churn", type=float, default=0.1)
    s.add_argument("--duration", type=float, help="seconds of hiss")
    s.add_argument("--points", type=int, help="trajectory points")
    s.add_argument("--mean-delay", type=float, default=0.0, help="added to generated trajectories")
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_sample)
    return p


def _check_inputs(args) -> None:
    if args.command == "analyze":
        need = {"spectrum": 1, "trajstats": 1}.get(args.analysis, 0)
        if need and len(args.inputs) < need:
            raise ConfigurationError(f"analyze {args.analysis} needs input file(s)")
        if not need and args.inputs:
            raise ConfigurationError(f"analyze {args.analysis} takes no positional inputs")
        if args.analysis == "spectrum" and len(args.inputs) != 1:
            raise ConfigurationError("analyze spectrum takes exactly one WAV file")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    threads = os.environ.get("MAGNETO_THREADS")
    try:
        if threads:
            torch.set_num_threads(int(threads))
        _check_inputs(args)
        return args.func(args)
    except (OSError, CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, DelayRangeError, pydantic.ValidationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MeasurementError as exc:
        print(f"measurement error: {exc}", file=sys.stderr)
        return EXIT_MEASURE
    except (nl.TrainingDiverged, dif.TrainingDiverged, NonFiniteGradient, FloatingPointError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
