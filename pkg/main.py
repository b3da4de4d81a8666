#!/usr/bin/env python3
"""
sonicforge — room-acoustic simulation and moving-source dataset generation.

Usage:
    python main.py rir --config data/generation_config.json --out outputs/rir.wav
    python main.py generate --pools data/pools.json --n-groups 10 --seed 7 --out outputs/run
    python main.py evaluate pairs.csv --metrics si_snr,snr --pit --out report.jsonl

Settings resolve as: command-line flags > config file > built-in defaults.
The log level comes from the SONICFORGE_LOG environment variable (default INFO).
Exit codes: 0 success, 1 input/data error, 2 unsupported feature.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Ensure project root is on path
sys.path.insert(0, str(Path(__file__).resolve().parent))

from acoustics.audio_io import load_audio, write_wav
from acoustics.rir import (
    ReceiverConfig, RIRRequest, energy_by_band, histogram_rt60, rt60_estimate, rt60_predict,
    trace_rir,
)
from acoustics.scene import Scene, load_scene
from acoustics.synthesis import (
    AudioBuffer, build_moving_render, render_moving, render_static,
)
from acoustics.trajectory import plan_path, with_duration
from core.config import BAND_CENTERS, GenerationConfig, PipelineConfig, get_config, load_generation_config
from core.errors import DomainError, DurationError, SonicForgeError, ValidationError
from core.logger import ProcessingLogger
from core.orchestrator import EvaluationOrchestrator, GenerationOrchestrator
from core.utils import write_json


def _banner(title: str) -> None:
    print("=" * 60)
    print(f"  {title}")
    print("=" * 60)


def _receiver(gen: GenerationConfig, config: PipelineConfig) -> ReceiverConfig:
    return ReceiverConfig(
        kind=gen.microphone_kind,
        center=gen.microphone_position,
        element_offsets=list(gen.array_offsets),
        capture_radius=config.tracer.capture_radius,
    )


def _safe_rt60(estimate, *args, **kwargs) -> Optional[float]:
    try:
        return estimate(*args, **kwargs)
    except (DurationError, DomainError, ValidationError):
        return None


def _band_dict(values) -> Dict[str, float]:
    return {f"{int(f)}": float(v) for f, v in zip(BAND_CENTERS, values)}


def rir_sidecar(scene: Scene, ir, gen: GenerationConfig) -> Dict[str, Any]:
    """Decay summary written next to the IR WAV."""
    sidecar: Dict[str, Any] = {
        "sample_rate": ir.sample_rate,
        "n_channels": ir.n_channels,
        "microphone": gen.microphone_kind,
        "microphone_position": list(gen.microphone_position),
        "source_position": list(gen.source_start),
        "movement_type": gen.movement_type,
        "rt60_t30": [_safe_rt60(rt60_estimate, ir, c, 30.0) for c in range(ir.n_channels)],
        "rt60_t20": [_safe_rt60(rt60_estimate, ir, c, 20.0) for c in range(ir.n_channels)],
        "rt60_envelope": [_safe_rt60(histogram_rt60, h) for h in ir.histograms],
        "energy_by_band": [_band_dict(energy_by_band(h)[0]) for h in ir.histograms],
    }
    dims = scene.box_dimensions()
    if dims is not None:
        mean_alpha = (scene.tri_area[:, None] * scene.tri_absorption).sum(axis=0) / scene.tri_area.sum()
        sidecar["room_dimensions"] = dims.tolist()
        for formula in ("sabine", "eyring"):
            try:
                sidecar[f"rt60_{formula}"] = _band_dict(rt60_predict(dims, mean_alpha, formula))
            except DomainError:
                sidecar[f"rt60_{formula}"] = None
    return sidecar


def render_source(scene: Scene, gen: GenerationConfig, config: PipelineConfig, base_dir: Path,
                  seed: int) -> AudioBuffer:
    """Render the config's source (static or along a planned path) plus its noise source."""
    receiver = _receiver(gen, config)
    dry = load_audio(base_dir / gen.source_audio, gen.sample_rate)
    if gen.movement_type == "dynamic":
        path = plan_path(scene, gen.source_start, gen.source_end,
                         config.mix.grid_cell, config.mix.clearance_half_height)
        trajectory = with_duration(path, dry.n_samples / dry.sample_rate)
        moving = build_moving_render(scene, trajectory, receiver, gen.sample_rate, seed,
                                     config.tracer, config.render)
        wet = render_moving(dry, moving, config.render.fft_block)
    else:
        wet = render_static(dry, scene, gen.source_start, receiver, seed, config.tracer,
                            config.render.fft_block)
    if gen.noise_audio and gen.noise_position is not None and (base_dir / gen.noise_audio).exists():
        noise_dry = load_audio(base_dir / gen.noise_audio, gen.sample_rate)
        noise = render_static(noise_dry, scene, gen.noise_position, receiver, seed ^ 1,
                              config.tracer, config.render.fft_block)
        n = wet.n_samples
        wet = AudioBuffer(wet.channels + noise.fit_length(n).channels, wet.sample_rate)
    return wet


def cmd_rir(args: argparse.Namespace, config: PipelineConfig) -> int:
    gen = load_generation_config(Path(args.config))
    out = Path(args.out or config.output_dir / "rir.wav")
    logger = ProcessingLogger(log_path=out.parent / "logs" / "processing_log.csv", level=config.log_level)
    scene = load_scene(config.scene_path, config.materials_path, config.walkable_height)

    req = RIRRequest.from_config(config.tracer, gen.source_start, _receiver(gen, config),
                                 gen.sample_rate, config.seed)
    ir = trace_rir(scene, req)
    write_wav(out, AudioBuffer(ir.channels, ir.sample_rate), "f32")
    sidecar_path = out.with_suffix(".json")
    sidecar = rir_sidecar(scene, ir, gen)
    write_json(sidecar_path, sidecar)
    logger.log_success("CLI", "rir", f"Wrote {ir.n_channels}-channel IR to {out}", details=str(sidecar_path))

    rendered = None
    base_dir = Path(args.config).parent
    if gen.source_audio and not (base_dir / gen.source_audio).exists():
        logger.log_warning("CLI", "render", f"Source audio {gen.source_audio} not found, render skipped")
    elif gen.source_audio:
        rendered = out.with_name(f"{out.stem}_render.wav")
        write_wav(rendered, render_source(scene, gen, config, base_dir, config.seed))
        logger.log_success("CLI", "render", f"Rendered {gen.movement_type} source to {rendered}")

    _banner("RIR SUMMARY")
    print(f"  Microphone     : {gen.microphone_kind} ({ir.n_channels} channel(s))")
    print(f"  RT60 (T30)     : {sidecar['rt60_t30'][0]}")
    if "rt60_eyring" in sidecar:
        print(f"  Eyring 1 kHz   : {(sidecar['rt60_eyring'] or {}).get('1000')}")
    print(f"  Impulse resp.  : {out}")
    print(f"  Sidecar        : {sidecar_path}")
    if rendered:
        print(f"  Render         : {rendered}")
    print("=" * 60)
    return 0


def cmd_generate(args: argparse.Namespace, config: PipelineConfig) -> int:
    if args.config:
        gen = load_generation_config(Path(args.config))
        config.receiver.kind = gen.microphone_kind
        config.receiver.offsets = list(gen.array_offsets)
        config.mix.clip_duration = gen.duration
        config.mix.sample_rate = gen.sample_rate
    if args.pools:
        config.pools_path = Path(args.pools)
    if args.n_groups is not None:
        config.n_groups = args.n_groups
    if args.jobs is not None:
        config.jobs = args.jobs

    _banner("sonicforge dataset generation")
    results = GenerationOrchestrator(config).run()
    groups = results["groups"]

    print()
    _banner("GENERATION RESULTS SUMMARY")
    print(f"  Groups requested        : {config.n_groups}")
    print(f"  Groups failed/flagged   : {results['failed']}")
    print(f"  Processing time         : {results['processing_time']:.2f}s")
    for row in groups:
        print(f"    {row['group_id']:14s}: {row['status']:8s} {row['error'] or row['issues']}")
    print()
    print("  Output files:")
    print(f"    Groups   : {config.output_dir}")
    print(f"    Summary  : {config.output_dir / 'summary.csv'}")
    print(f"    Log      : {config.log_dir / 'processing_log.csv'}")
    print("=" * 60)
    return 1 if results["failed"] else 0


def cmd_evaluate(args: argparse.Namespace, config: PipelineConfig) -> int:
    out = Path(args.out or config.output_dir / "report.jsonl")
    logger = ProcessingLogger(log_path=out.parent / "logs" / "evaluation_log.csv", level=config.log_level)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    orchestrator = EvaluationOrchestrator(logger, metrics, pit=args.pit,
                                          keep_going=args.keep_going, jobs=args.jobs or 1)
    results = orchestrator.run(Path(args.manifest), out)

    _banner("EVALUATION SUMMARY")
    print(f"  Rows failed : {results['failed']}")
    if not results["summary"].empty:
        print(results["summary"].to_string(index=False))
    print(f"  Report      : {out}")
    print("=" * 60)
    return 1 if results["aborted"] else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonicforge",
        description="Room-acoustic RIR simulation and moving-source dataset generation",
        epilog="Precedence: command-line flags > config file > defaults. "
               "Log level: SONICFORGE_LOG=DEBUG|INFO|WARNING|ERROR.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable DEBUG-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scene", help="Scene OBJ file (generate: file or directory of OBJs)")
        p.add_argument("--materials", help="Materials JSON")
        p.add_argument("--seed", type=int, default=None, help="Root seed (default 0)")
        p.add_argument("--out", help="Output path")

    rir = sub.add_parser("rir", help="Trace one RIR from a generation config")
    common(rir)
    rir.add_argument("--config", required=True, help="Generation config JSON")

    gen = sub.add_parser("generate", help="Generate groups of moving-source stems")
    common(gen)
    gen.add_argument("--config", help="Generation config JSON (microphone and audio settings)")
    gen.add_argument("--pools", help="Pool manifest JSON")
    gen.add_argument("--n-groups", type=int, default=None, help="Number of groups")
    gen.add_argument("--jobs", type=int, default=None, help="Worker processes")

    ev = sub.add_parser("evaluate", help="Score estimates against references")
    ev.add_argument("manifest", help="CSV with columns id, reference, estimate (';'-separated paths)")
    ev.add_argument("--metrics", default="si_snr", help="Comma-separated: si_snr, snr")
    ev.add_argument("--pit", action="store_true", help="Match estimates by best permutation")
    ev.add_argument("--keep-going", action="store_true", help="Record failing rows and continue")
    ev.add_argument("--jobs", type=int, default=None, help="Worker threads")
    ev.add_argument("--out", help="JSON-lines report path")
    return parser


def _apply_common(args: argparse.Namespace, config: PipelineConfig) -> None:
    if args.verbose:
        config.log_level = "DEBUG"
    if getattr(args, "scene", None):
        config.scene_path = Path(args.scene)
    if getattr(args, "materials", None):
        config.materials_path = Path(args.materials)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if args.command == "generate" and args.out:
        config.output_dir = Path(args.out)


COMMANDS = {"rir": cmd_rir, "generate": cmd_generate, "evaluate": cmd_evaluate}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    config = get_config()
    _apply_common(args, config)
    try:
        return COMMANDS[args.command](args, config)
    except SonicForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
