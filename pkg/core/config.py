"""
Configuration module for sonicforge.

Provides centralized, config-driven architecture with all tunable parameters,
plus the loader for the per-scene generation config (microphone, source,
noise and audio settings for a single manual run).
"""

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from core.errors import ConfigurationError, FormatError, UnsupportedError


# Project root directory
PROJECT_ROOT = Path(__file__).resolve().parent.parent

# Directory paths
DATA_DIR = PROJECT_ROOT / "data"
OUTPUTS_DIR = PROJECT_ROOT / "outputs"

LOG_ENV_VAR = "SONICFORGE_LOG"

SPEED_OF_SOUND = 343.0

# Octave band centers (Hz) used for every material and histogram
BAND_CENTERS: Tuple[float, ...] = (125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0)
NUM_BANDS = len(BAND_CENTERS)


@dataclass
class TracerConfig:
    """Configuration for the stochastic ray tracer."""

    n_rays: int = 20000
    max_ir_seconds: float = 2.0
    max_bounces: int = 100
    bin_width: float = 0.001
    capture_radius: float = 0.25
    # Relative per-band energy below which a ray is dropped (-60 dB)
    energy_floor: float = 1e-6
    air_absorption: bool = False
    # Rays are split into this many fixed chunks; results do not depend on thread count
    n_chunks: int = 64
    # dB per metre per band, used when air_absorption is on (20 C, 50 % RH)
    air_attenuation_db_per_m: List[float] = field(default_factory=lambda: [
        0.0004, 0.0011, 0.0027, 0.0050, 0.0090, 0.0260,
    ])


@dataclass
class RenderConfig:
    """Configuration for moving/static rendering."""

    rir_spacing: float = 0.5
    fft_block: int = 8192


@dataclass
class LoudnessTargets:
    """Integrated loudness targets in LUFS."""

    speech: float = -17.0
    environmental: float = -21.0
    music: float = -24.0
    # "pre": normalize dry stems before spatialization, "post": after
    stage: str = "pre"

    def for_kind(self, kind: str) -> float:
        """Return the target for a stem kind (speech / environmental / music)."""
        targets = {
            "speech": self.speech,
            "environmental": self.environmental,
            "music": self.music,
        }
        if kind not in targets:
            raise ConfigurationError(f"Unknown stem kind '{kind}'")
        return targets[kind]


@dataclass
class MixConfig:
    """Configuration for group planning and stem arrangement."""

    clip_duration: float = 60.0
    sample_rate: int = 16000
    n_sources: int = 3
    utterances_range: Tuple[int, int] = (3, 5)
    noise_segments_range: Tuple[int, int] = (6, 8)
    speech_gap_max: float = 8.0
    noise_gap_max: float = 4.0
    min_distance: float = 1.0
    max_distance: float = 8.0
    max_tries: int = 1000
    grid_cell: float = 0.25
    clearance_half_height: float = 0.5


@dataclass
class ReceiverSettings:
    """Microphone configuration used for every render of a group."""

    kind: str = "mono"
    offsets: List[Tuple[float, float, float]] = field(default_factory=list)


@dataclass
class PipelineConfig:
    """Main pipeline configuration."""

    # File paths
    scene_path: Path = DATA_DIR / "shoebox.obj"
    materials_path: Path = DATA_DIR / "materials.json"
    pools_path: Path = DATA_DIR / "pools.json"
    output_dir: Path = OUTPUTS_DIR
    metadata_schema_path: Path = DATA_DIR / "metadata_schema.json"

    walkable_height: float = 1.5

    tracer: TracerConfig = field(default_factory=TracerConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    loudness: LoudnessTargets = field(default_factory=LoudnessTargets)
    mix: MixConfig = field(default_factory=MixConfig)
    receiver: ReceiverSettings = field(default_factory=ReceiverSettings)

    # Logging
    log_level: str = field(
        default_factory=lambda: os.environ.get(LOG_ENV_VAR, "INFO").upper()
    )

    # Processing
    seed: int = 0
    n_groups: int = 1
    jobs: int = 1

    @property
    def log_dir(self) -> Path:
        return self.output_dir / "logs"


def get_config() -> PipelineConfig:
    """Return the default pipeline configuration."""
    return PipelineConfig()


# ----------------------------------------------------------------------
# Generation config (single manual run)
# ----------------------------------------------------------------------

MICROPHONE_TYPES = {
    "monaural": "mono",
    "mono": "mono",
    "ambisonics": "ambisonics_fo",
    "custom array": "array",
    "array": "array",
}


@dataclass
class GenerationConfig:
    """Parsed generation config for a single scene run."""

    microphone_kind: str
    microphone_position: Tuple[float, float, float]
    array_offsets: List[Tuple[float, float, float]]
    source_start: Tuple[float, float, float]
    source_end: Optional[Tuple[float, float, float]]
    movement_type: str
    source_audio: Optional[str]
    noise_position: Optional[Tuple[float, float, float]]
    noise_audio: Optional[str]
    duration: float
    sample_rate: int
    scene: str


def strip_json_comments(text: str) -> str:
    """Remove // comments and trailing commas so hand-written configs parse."""
    out_lines = []
    for line in text.splitlines():
        in_string = False
        cut = len(line)
        i = 0
        while i < len(line):
            ch = line[i]
            if ch == '"' and (i == 0 or line[i - 1] != "\\"):
                in_string = not in_string
            elif not in_string and line.startswith("//", i):
                cut = i
                break
            i += 1
        out_lines.append(line[:cut])
    cleaned = "\n".join(out_lines)
    return re.sub(r",(\s*[}\]])", r"\1", cleaned)


def _point(block: Dict[str, Any], key: str) -> Tuple[float, float, float]:
    try:
        p = block[key]
        return (float(p["x"]), float(p["y"]), float(p["z"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid or missing point '{key}': {exc}") from exc


def load_generation_config(path: Path) -> GenerationConfig:
    """Parse a generation config JSON (microphone / sound_source / noise_source /
    audio_settings / environment blocks)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        raw = json.loads(strip_json_comments(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, path=str(path), line=exc.lineno) from exc

    mic = raw.get("microphone")
    source = raw.get("sound_source")
    if not isinstance(mic, dict) or not isinstance(source, dict):
        raise ConfigurationError("Config requires 'microphone' and 'sound_source' blocks")

    mic_type = str(mic.get("type", "monaural")).strip().lower()
    if mic_type == "binaural":
        raise UnsupportedError("Binaural microphones are not supported (no HRTF rendering)")
    if mic_type not in MICROPHONE_TYPES:
        raise ConfigurationError(f"Unknown microphone type '{mic.get('type')}'")
    kind = MICROPHONE_TYPES[mic_type]

    offsets: List[Tuple[float, float, float]] = []
    if kind == "array":
        for item in mic.get("offsets", []):
            offsets.append((float(item["x"]), float(item["y"]), float(item["z"])))
        if not offsets:
            raise ConfigurationError("Custom array microphone requires 'offsets'")

    movement = str(source.get("movement_type", "static")).lower()
    if movement not in {"static", "dynamic"}:
        raise ConfigurationError(f"Unknown movement_type '{movement}'")
    end = _point(source, "end_point") if "end_point" in source else None
    if movement == "dynamic" and end is None:
        raise ConfigurationError("Dynamic sources require 'end_point'")

    noise = raw.get("noise_source") or {}
    settings = raw.get("audio_settings") or source.get("audio_settings") or {}
    environment = raw.get("environment") or {}

    return GenerationConfig(
        microphone_kind=kind,
        microphone_position=_point(mic, "position"),
        array_offsets=offsets,
        source_start=_point(source, "start_point"),
        source_end=end,
        movement_type=movement,
        source_audio=source.get("audio_file"),
        noise_position=_point(noise, "position") if "position" in noise else None,
        noise_audio=noise.get("audio_file"),
        duration=float(settings.get("duration", 60.0)),
        sample_rate=int(settings.get("sampling_rate", 16000)),
        scene=str(environment.get("scene", "")),
    )
