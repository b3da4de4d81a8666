#!/usr/bin/env python3
"""
Script to generate a synthetic demo pool for sonicforge.

Writes speech-like, environmental and music WAV clips plus the pool manifest
(data/pools.json by default), and the two audio files named by
data/generation_config.json. No corpus download is needed to try the pipeline.

Usage:
    python scripts/generate_mock_data.py                     # default pool in data/
    python scripts/generate_mock_data.py --speakers 6 --seed 3
    python scripts/generate_mock_data.py --out /tmp/pool --clip-seconds 1 2
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from acoustics.audio_io import write_wav  # noqa: E402
from acoustics.synthesis import AudioBuffer  # noqa: E402
from core.utils import derive_seed, write_json  # noqa: E402

DATA_DIR = PROJECT_ROOT / "data"

WORDS = [
    "the", "golden", "star", "was", "still", "on", "top", "of", "tree", "and",
    "glittered", "in", "sunshine", "time", "enough", "had", "he", "for", "his",
    "reflections", "nobody", "came", "up", "surely", "we", "can", "submit", "with",
    "good", "grace", "who", "is", "this", "fellow", "plucking", "at", "your", "sleeve",
]


def speech_like(rng: np.random.Generator, seconds: float, sample_rate: int, pitch: float) -> np.ndarray:
    """Voiced harmonic bursts with a syllable-rate envelope."""
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    f0 = pitch * (1.0 + 0.05 * np.sin(2 * np.pi * 0.7 * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    voiced = sum(np.sin(k * phase) / k for k in range(1, 12))
    syllables = np.clip(np.sin(2 * np.pi * rng.uniform(3.0, 5.0) * t + rng.uniform(0, 2 * np.pi)), 0, None)
    breath = 0.05 * rng.standard_normal(t.size)
    return 0.2 * (voiced * syllables ** 2 + breath)


def environmental(rng: np.random.Generator, seconds: float, sample_rate: int) -> np.ndarray:
    """Brownian rumble plus sparse clicks."""
    n = int(round(seconds * sample_rate))
    rumble = np.cumsum(rng.standard_normal(n))
    rumble -= np.convolve(rumble, np.ones(801) / 801, mode="same")
    rumble /= np.max(np.abs(rumble)) + 1e-12
    clicks = (rng.random(n) < 5.0 / sample_rate) * rng.uniform(-1, 1, n)
    return 0.3 * rumble + 0.5 * clicks


def music(rng: np.random.Generator, seconds: float, sample_rate: int) -> np.ndarray:
    """A random-walk melody of decaying plucked notes."""
    n = int(round(seconds * sample_rate))
    out = np.zeros(n)
    note_len = int(0.25 * sample_rate)
    semitone = int(rng.integers(-12, 12))
    for start in range(0, n, note_len):
        semitone += int(rng.integers(-3, 4))
        freq = 440.0 * 2.0 ** (semitone / 12.0)
        length = min(note_len, n - start)
        t = np.arange(length) / sample_rate
        out[start:start + length] += np.sin(2 * np.pi * freq * t) * np.exp(-6.0 * t)
    return 0.3 * out


def _write(path: Path, samples: np.ndarray, sample_rate: int) -> float:
    write_wav(path, AudioBuffer.mono(samples, sample_rate), "pcm16")
    return samples.size / sample_rate


def generate_pools(
    out_dir: Path,
    n_speakers: int = 4,
    utterances_per_speaker: int = 5,
    n_environmental: int = 8,
    n_music: int = 8,
    clip_seconds: Tuple[float, float] = (4.0, 9.0),
    sample_rate: int = 16000,
    seed: int = 0,
) -> Path:
    """Write a synthetic pool and its manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(derive_seed(seed, "mock-pool"))
    lo, hi = clip_seconds
    rows: List[Dict] = []

    for s in range(n_speakers):
        speaker = f"spk{s:03d}"
        pitch = float(rng.uniform(90.0, 220.0))
        for u in range(utterances_per_speaker):
            rel = Path("speech") / speaker / f"{speaker}-{u:04d}.wav"
            duration = _write(out_dir / rel, speech_like(rng, float(rng.uniform(lo, hi)), sample_rate, pitch),
                              sample_rate)
            n_words = int(rng.integers(3, 10))
            transcript = " ".join(WORDS[i] for i in rng.integers(0, len(WORDS), n_words)).upper()
            rows.append({"speaker_id": speaker, "path": rel.as_posix(), "transcript": transcript,
                         "duration": round(duration, 6), "kind": "speech"})

    for kind, count, make in (("environmental", n_environmental, environmental), ("music", n_music, music)):
        for i in range(count):
            rel = Path(kind) / f"{kind}-{i:04d}.wav"
            duration = _write(out_dir / rel, make(rng, float(rng.uniform(lo, hi)), sample_rate), sample_rate)
            rows.append({"speaker_id": "", "path": rel.as_posix(), "transcript": "",
                         "duration": round(duration, 6), "kind": kind})

    manifest = out_dir / "pools.json"
    write_json(manifest, rows)
    return manifest


def generate_config_audio(out_dir: Path, seconds: float = 10.0, sample_rate: int = 16000,
                          seed: int = 0) -> Sequence[Path]:
    """Audio files referenced by the bundled generation config."""
    rng = np.random.default_rng(derive_seed(seed, "config-audio"))
    source = Path(out_dir) / "source_audio.wav"
    noise = Path(out_dir) / "background_noise.wav"
    _write(source, speech_like(rng, seconds, sample_rate, 140.0), sample_rate)
    _write(noise, environmental(rng, seconds, sample_rate), sample_rate)
    return source, noise


def main() -> None:
    parser = argparse.ArgumentParser(description="Generate a synthetic sonicforge pool")
    parser.add_argument("--out", type=Path, default=DATA_DIR, help="Output directory")
    parser.add_argument("--speakers", type=int, default=4)
    parser.add_argument("--utterances", type=int, default=5, help="Utterances per speaker")
    parser.add_argument("--environmental", type=int, default=8)
    parser.add_argument("--music", type=int, default=8)
    parser.add_argument("--clip-seconds", type=float, nargs=2, default=(4.0, 9.0), metavar=("MIN", "MAX"))
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    manifest = generate_pools(
        args.out, args.speakers, args.utterances, args.environmental, args.music,
        tuple(args.clip_seconds), seed=args.seed,
    )
    print(f"Generated pool manifest -> {manifest}")
    for path in generate_config_audio(args.out, seed=args.seed):
        print(f"Generated config audio -> {path}")


if __name__ == "__main__":
    main()
