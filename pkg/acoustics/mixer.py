"""
Group construction: randomized placement, 60-second stem arrangement,
loudness normalization, spatial rendering and metadata.

Everything random flows from the group seed through numpy Generators
seeded with `derive_seed`, so a group is a pure function of
(scene, pools, seed, config).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from acoustics.audio_io import load_audio
from acoustics.loudness import measure_lufs, normalize_to
from acoustics.rir import ReceiverConfig
from acoustics.scene import Scene
from acoustics.synthesis import AudioBuffer, build_moving_render, render_moving, render_static
from acoustics.trajectory import (
    Trajectory, occupancy_grid, plan_path, validate_placement, with_duration,
)
from core.config import PipelineConfig
from core.errors import DataError, PlacementError, UnreachableError, ValidationError
from core.utils import derive_seed, read_json

logger = logging.getLogger("sonicforge.mixer")

STEM_KINDS = ("speech", "environmental", "music")
SPEECH_STEMS = ("source1", "source2", "source3")
NOISE_STEMS = {"environmental": "noise", "music": "music"}
TASKS = ("sep2", "enh")
MAX_PATH_ATTEMPTS = 50


# ----------------------------------------------------------------------
# Pools
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Utterance:
    path: str
    transcript: str
    duration: float
    speaker_id: str = ""
    kind: str = "speech"

    @property
    def name(self) -> str:
        return Path(self.path).name


@dataclass
class Pools:
    """Speech utterances per speaker plus environmental and music clip pools."""

    speech: Dict[str, List[Utterance]] = field(default_factory=dict)
    environmental: List[Utterance] = field(default_factory=list)
    music: List[Utterance] = field(default_factory=list)

    @property
    def speakers(self) -> List[str]:
        return sorted(k for k, v in self.speech.items() if v)

    def is_empty(self) -> bool:
        return not (self.speakers or self.environmental or self.music)


def load_manifest(path: Path) -> Pools:
    """Read a pool manifest: JSON list of {speaker_id, path, transcript, duration, kind?}.

    Relative audio paths resolve against the manifest's directory.
    """
    path = Path(path)
    rows = read_json(path)
    if not isinstance(rows, list):
        raise DataError(f"{path}: manifest must be a JSON list")
    pools = Pools()
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or "path" not in row:
            raise DataError(f"{path}: row {i} needs at least a 'path'")
        kind = str(row.get("kind", "speech"))
        if kind not in STEM_KINDS:
            raise DataError(f"{path}: row {i} has unknown kind '{kind}'")
        audio = Path(row["path"])
        if not audio.is_absolute():
            audio = path.parent / audio
        try:
            duration = float(row.get("duration", 0.0))
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}: row {i} has a bad duration") from exc
        utt = Utterance(
            path=str(audio),
            transcript=str(row.get("transcript", "") or ""),
            duration=duration,
            speaker_id=str(row.get("speaker_id", "")),
            kind=kind,
        )
        if kind == "speech":
            pools.speech.setdefault(utt.speaker_id, []).append(utt)
        elif kind == "environmental":
            pools.environmental.append(utt)
        else:
            pools.music.append(utt)
    logger.info(
        "Loaded manifest %s: %d speakers, %d environmental, %d music",
        path.name, len(pools.speakers), len(pools.environmental), len(pools.music),
    )
    return pools


# ----------------------------------------------------------------------
# Plans
# ----------------------------------------------------------------------

@dataclass
class SourcePlan:
    speaker_id: str
    utterances: List[Utterance]
    gaps: List[float]
    start: Tuple[float, float, float]
    end: Tuple[float, float, float]
    trajectory: Trajectory


@dataclass
class NoisePlan:
    kind: str
    segments: List[Utterance]
    gaps: List[float]
    position: Tuple[float, float, float]


@dataclass
class MixPlan:
    """Randomized layout of one group."""

    scene: Scene
    scene_name: str
    seed: int
    mic: Tuple[float, float, float]
    sources: List[SourcePlan]
    noise: NoisePlan
    music: NoisePlan
    clip_duration: float
    sample_rate: int

    def to_dict(self, placements: Optional[Dict[str, List[List[int]]]] = None) -> Dict:
        """JSON view of the plan.

        placements maps stem names (source1.., noise, music) to the [start, end)
        pairs of the rendered group; they are copied into the matching entries
        so plan.json and metadata.json agree.
        """
        placements = placements or {}

        def placed(entry: Dict, stem: str) -> Dict:
            if stem in placements:
                entry["start_end_points"] = [list(pair) for pair in placements[stem]]
            return entry

        def noise_dict(n: NoisePlan) -> Dict:
            return placed({
                "kind": n.kind,
                "audio": [u.name for u in n.segments],
                "gaps": n.gaps,
                "position": list(n.position),
            }, NOISE_STEMS[n.kind])

        return {
            "scene": self.scene_name,
            "seed": self.seed,
            "clip_duration": self.clip_duration,
            "sample_rate": self.sample_rate,
            "microphone": {"position": list(self.mic)},
            "sources": [
                placed({
                    "speaker_id": s.speaker_id,
                    "audio": [u.name for u in s.utterances],
                    "gaps": s.gaps,
                    "start_point": list(s.start),
                    "end_point": list(s.end),
                    "trajectory": s.trajectory.to_dict(),
                }, SPEECH_STEMS[k])
                for k, s in enumerate(self.sources)
            ],
            "noise": noise_dict(self.noise),
            "music": noise_dict(self.music),
        }


def _sample_point(
    rng: np.random.Generator,
    candidates: np.ndarray,
    anchors: Sequence[Tuple[str, np.ndarray]],
    min_distance: float,
    max_distance: float,
    max_tries: int,
    label: str,
) -> np.ndarray:
    """Rejection-sample a candidate position 1-8 m from every anchor."""
    for _ in range(max_tries):
        p = candidates[rng.integers(len(candidates))]
        if all(min_distance <= np.linalg.norm(p - a) <= max_distance for _, a in anchors):
            return p
    names = "+".join(name for name, _ in anchors)
    raise PlacementError(
        f"no {label} position {min_distance:g}-{max_distance:g} m from {names} after {max_tries} tries",
        constraint=f"{label}: {min_distance:g}-{max_distance:g} m from {names}",
    )


def _check_pools(pools: Pools, n_sources: int) -> None:
    if pools.is_empty():
        raise DataError("pools are empty")
    if len(pools.speakers) < n_sources:
        raise DataError(f"need {n_sources} distinct speakers, pool has {len(pools.speakers)}")
    if not pools.environmental:
        raise DataError("environmental noise pool is empty")
    if not pools.music:
        raise DataError("music pool is empty")


def plan_group(scene: Scene, pools: Pools, seed: int, config: Optional[PipelineConfig] = None,
               scene_name: str = "") -> MixPlan:
    """Sample mic, source and noise positions, trajectories and clip arrangements."""
    config = config or PipelineConfig()
    mix = config.mix
    _check_pools(pools, mix.n_sources)
    rng = np.random.default_rng(derive_seed(seed, "plan"))
    height = scene.walkable_height

    grid = occupancy_grid(scene, height, mix.grid_cell, mix.clearance_half_height)
    cells = grid.free_cells()
    candidates = np.array([grid.center(i, j) for i, j in cells]) if len(cells) else np.empty((0, 3))
    candidates = np.array([c for c in candidates if scene.contains(c)]).reshape(-1, 3)
    if len(candidates) == 0:
        raise PlacementError("scene has no walkable cells", constraint="walkable area")
    lo, hi = mix.min_distance, mix.max_distance

    mic = candidates[rng.integers(len(candidates))]
    speakers = [pools.speakers[i] for i in rng.choice(len(pools.speakers), mix.n_sources, replace=False)]

    sources: List[SourcePlan] = []
    for k, speaker in enumerate(speakers):
        start = _sample_point(rng, candidates, [("mic", mic)], lo, hi, mix.max_tries, f"source{k + 1} start")
        trajectory, end = None, None
        for _ in range(MAX_PATH_ATTEMPTS):
            end = _sample_point(rng, candidates, [("mic", mic), ("start", start)], lo, hi,
                                mix.max_tries, f"source{k + 1} end")
            try:
                trajectory = plan_path(scene, start, end, mix.grid_cell, mix.clearance_half_height)
                break
            except UnreachableError:
                logger.debug("Endpoint %s unreachable, resampling", end.tolist())
        if trajectory is None:
            raise PlacementError(f"no reachable end point for source{k + 1}", constraint="reachable end point")

        available = pools.speech[speaker]
        lo_n, hi_n = mix.utterances_range
        count = min(int(rng.integers(lo_n, hi_n + 1)), len(available))
        chosen = [available[i] for i in rng.choice(len(available), count, replace=False)]
        gaps = rng.uniform(0.0, mix.speech_gap_max, count).tolist()
        sources.append(SourcePlan(
            speaker_id=speaker,
            utterances=chosen,
            gaps=gaps,
            start=tuple(start.tolist()),
            end=tuple(end.tolist()),
            trajectory=with_duration(trajectory, mix.clip_duration),
        ))

    def noise_plan(kind: str, pool: List[Utterance]) -> NoisePlan:
        lo_n, hi_n = mix.noise_segments_range
        count = int(rng.integers(lo_n, hi_n + 1))
        segments = [pool[i] for i in rng.choice(len(pool), count, replace=True)]
        gaps = rng.uniform(0.0, mix.noise_gap_max, count).tolist()
        position = _sample_point(rng, candidates, [("mic", mic)], lo, hi, mix.max_tries, f"{kind} noise")
        return NoisePlan(kind=kind, segments=segments, gaps=gaps, position=tuple(position.tolist()))

    noise = noise_plan("environmental", pools.environmental)
    music = noise_plan("music", pools.music)

    plan = MixPlan(
        scene=scene, scene_name=scene_name, seed=int(seed), mic=tuple(mic.tolist()),
        sources=sources, noise=noise, music=music,
        clip_duration=mix.clip_duration, sample_rate=mix.sample_rate,
    )
    for s in sources:
        report = validate_placement(plan.mic, s.start, s.end, [noise.position, music.position], lo, hi)
        if not report:
            raise PlacementError("; ".join(report.violations), constraint=report.violations[0])
    return plan


# ----------------------------------------------------------------------
# Arrangement and rendering
# ----------------------------------------------------------------------

class Arrangement(NamedTuple):
    buffer: AudioBuffer
    start_end_points: List[List[int]]
    kept: List[int]
    dropped: List[int]


def _place(lengths: Sequence[int], gaps: Sequence[float], clip_duration: float,
           sample_rate: int) -> Tuple[List[List[int]], List[int], List[int]]:
    total = int(round(clip_duration * sample_rate))
    cursor = 0
    pairs, kept, dropped = [], [], []
    for i, (length, gap) in enumerate(zip(lengths, gaps)):
        start = cursor + int(round(gap * sample_rate))
        end = start + int(length)
        if end > total or length <= 0:
            dropped.append(i)
            continue
        pairs.append([start, end])
        kept.append(i)
        cursor = end
    return pairs, kept, dropped


def arrange_stem(clips: Sequence[AudioBuffer], gaps: Sequence[float], clip_duration: float = 60.0,
                 sample_rate: int = 16000) -> Arrangement:
    """Lay clips on a fixed-length timeline, each after the previous plus its gap.

    Clips that would run past the end are dropped whole.
    """
    if len(clips) != len(gaps):
        raise ValidationError("need one gap per clip")
    total = int(round(clip_duration * sample_rate))
    n_channels = clips[0].n_channels if clips else 1
    lengths = [c.n_samples for c in clips]
    pairs, kept, dropped = _place(lengths, gaps, clip_duration, sample_rate)
    out = np.zeros((n_channels, total))
    for (start, end), i in zip(pairs, kept):
        if clips[i].sample_rate != sample_rate:
            raise ValidationError(f"clip {i} is {clips[i].sample_rate} Hz, expected {sample_rate}")
        out[:, start:end] = clips[i].channels
    if dropped:
        logger.debug("Dropped %d clip(s) overrunning %.1f s", len(dropped), clip_duration)
    return Arrangement(AudioBuffer(out, sample_rate), pairs, kept, dropped)


@dataclass
class GroupResult:
    stems: Dict[str, AudioBuffer]
    metadata: Dict[str, Dict]
    loudness: Dict[str, float]
    dropped: Dict[str, List[str]]


def _normalize(buf: AudioBuffer, target: float, label: str) -> AudioBuffer:
    if not np.isfinite(measure_lufs(buf)):
        logger.warning("Stem %s is silent, skipping loudness normalization", label)
        return buf
    return normalize_to(buf, target).buffer


def _measured(buf: AudioBuffer) -> float:
    level = measure_lufs(buf)
    return float(level) if np.isfinite(level) else float("-inf")


def build_group(plan: MixPlan, config: Optional[PipelineConfig] = None) -> GroupResult:
    """Render the five stems of a plan and assemble its metadata."""
    config = config or PipelineConfig()
    sr = plan.sample_rate
    n_total = int(round(plan.clip_duration * sr))
    targets = config.loudness
    post = targets.stage == "post"
    receiver = ReceiverConfig(
        kind=config.receiver.kind,
        center=plan.mic,
        element_offsets=list(config.receiver.offsets),
        capture_radius=config.tracer.capture_radius,
    )

    stems: Dict[str, AudioBuffer] = {}
    metadata: Dict[str, Dict] = {}
    loudness: Dict[str, float] = {}
    dropped: Dict[str, List[str]] = {}

    for k, source in enumerate(plan.sources):
        name = SPEECH_STEMS[k]
        clips = [load_audio(Path(u.path), sr) for u in source.utterances]
        arranged = arrange_stem(clips, source.gaps, plan.clip_duration, sr)
        dry = arranged.buffer
        if not post:
            dry = _normalize(dry, targets.speech, name)
        loudness[f"{name}_dry"] = _measured(dry)
        moving = build_moving_render(
            plan.scene, source.trajectory, receiver, sr, derive_seed(plan.seed, name),
            config.tracer, config.render,
        )
        wet = render_moving(dry, moving, config.render.fft_block).fit_length(n_total)
        if post:
            wet = _normalize(wet, targets.speech, name)
        stems[name] = wet
        metadata[name] = {
            "audio": [source.utterances[i].name for i in arranged.kept],
            "start_end_points": arranged.start_end_points,
            "words": [source.utterances[i].transcript for i in arranged.kept],
        }
        dropped[name] = [source.utterances[i].name for i in arranged.dropped]

    for noise in (plan.noise, plan.music):
        name = NOISE_STEMS[noise.kind]
        target = targets.for_kind(noise.kind)
        clips = [load_audio(Path(u.path), sr) for u in noise.segments]
        arranged = arrange_stem(clips, noise.gaps, plan.clip_duration, sr)
        dry = arranged.buffer
        if not post:
            dry = _normalize(dry, target, name)
        loudness[f"{name}_dry"] = _measured(dry)
        wet = render_static(dry, plan.scene, noise.position, receiver, derive_seed(plan.seed, name),
                            config.tracer, config.render.fft_block).fit_length(n_total)
        if post:
            wet = _normalize(wet, target, name)
        stems[name] = wet
        metadata[name] = {
            "audio": [noise.segments[i].name for i in arranged.kept],
            "start_end_points": arranged.start_end_points,
        }
        dropped[name] = [noise.segments[i].name for i in arranged.dropped]

    for name, stem in stems.items():
        loudness[name] = _measured(stem)
    return GroupResult(stems=stems, metadata=metadata, loudness=loudness, dropped=dropped)


# ----------------------------------------------------------------------
# Mixtures
# ----------------------------------------------------------------------

class Mixture(NamedTuple):
    mixture: AudioBuffer
    references: List[AudioBuffer]
    selected: List[str]


def compose_mixture(stems: Dict[str, AudioBuffer], task: str, noise_kind: str, seed: int) -> Mixture:
    """Sum seed-chosen speech stems with one noise stem (no re-normalization).

    sep2 mixes two speakers, enh one speaker.
    """
    if task not in TASKS:
        raise ValidationError(f"unknown task '{task}'")
    noise_name = {"environmental": "noise", "musical": "music", "music": "music"}.get(noise_kind)
    if noise_name is None:
        raise ValidationError(f"unknown noise kind '{noise_kind}'")
    rng = np.random.default_rng(derive_seed(seed, "compose", task))
    speech = [s for s in SPEECH_STEMS if s in stems]
    n_speakers = 2 if task == "sep2" else 1
    if len(speech) < n_speakers:
        raise DataError(f"{task} needs {n_speakers} speech stems, got {len(speech)}")
    selected = [speech[i] for i in rng.choice(len(speech), n_speakers, replace=False)]
    references = [stems[s] for s in selected]
    total = stems[noise_name].channels.copy()
    for ref in references:
        total = total + ref.channels
    return Mixture(AudioBuffer(total, references[0].sample_rate), references, selected)


def random_segment(mixture: AudioBuffer, references: Sequence[AudioBuffer], seconds: float = 3.0,
                   seed: int = 0) -> Tuple[AudioBuffer, List[AudioBuffer]]:
    """Crop the same random window from a mixture and its references."""
    n = int(round(seconds * mixture.sample_rate))
    if n <= 0 or n > mixture.n_samples:
        raise ValidationError(f"segment of {seconds} s does not fit a {mixture.duration:.2f} s mixture")
    rng = np.random.default_rng(derive_seed(seed, "segment"))
    start = int(rng.integers(0, mixture.n_samples - n + 1))
    def crop(buf: AudioBuffer) -> AudioBuffer:
        return AudioBuffer(buf.channels[:, start:start + n], buf.sample_rate)

    return crop(mixture), [crop(r) for r in references]
