"""
WAV reading/writing and resampling.

Decoding and encoding go through soundfile. Only PCM16 and IEEE float32
WAV files are accepted; a light RIFF walk runs first so malformed files
report the byte offset of the damage.
"""

import logging
import math
import struct
from pathlib import Path

import numpy as np
import soundfile as sf
from scipy.signal import firwin, resample_poly

from acoustics.synthesis import AudioBuffer
from core.errors import DataError, FormatError, UnsupportedError, ValidationError

logger = logging.getLogger("sonicforge.audio_io")

PCM16_SCALE = 32768.0
# output format name -> libsndfile subtype
WRITE_FORMATS = {"f32": "FLOAT", "pcm16": "PCM_16"}
READ_SUBTYPES = {"PCM_16": ("int16", 1.0 / PCM16_SCALE), "FLOAT": ("float32", 1.0)}

KAISER_BETA = 8.0
TAPS_PER_PHASE = 64


def _check_riff(path: Path) -> None:
    """Walk the RIFF chunk list and raise FormatError at the first inconsistent offset."""
    data = path.read_bytes()
    if len(data) < 12:
        raise FormatError("file shorter than a RIFF header", path=str(path), offset=len(data))
    if data[0:4] != b"RIFF":
        raise FormatError("missing RIFF tag", path=str(path), offset=0)
    if data[8:12] != b"WAVE":
        raise FormatError("missing WAVE tag", path=str(path), offset=8)
    seen = set()
    offset = 12
    while offset < len(data):
        if offset + 8 > len(data):
            raise FormatError("truncated chunk header", path=str(path), offset=offset)
        chunk_id = data[offset:offset + 4]
        (size,) = struct.unpack_from("<I", data, offset + 4)
        start = offset + 8
        if start + size > len(data):
            raise FormatError(
                f"chunk {chunk_id!r} declares {size} bytes, only {len(data) - start} present",
                path=str(path), offset=offset + 4,
            )
        seen.add(chunk_id)
        offset = start + size + (size & 1)
    if b"fmt " not in seen:
        raise FormatError("no fmt chunk", path=str(path), offset=12)
    if b"data" not in seen:
        raise FormatError("no data chunk", path=str(path), offset=len(data))


def read_wav(path: Path) -> AudioBuffer:
    """Decode a PCM16 or float32 WAV file to float samples."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Audio file not found: {path}")
    _check_riff(path)
    try:
        info = sf.info(str(path))
    except RuntimeError as exc:
        raise FormatError(f"unreadable WAV: {exc}", path=str(path)) from exc
    if info.format not in ("WAV", "WAVEX") or info.subtype not in READ_SUBTYPES:
        raise UnsupportedError(f"{path}: unsupported WAV encoding ({info.format} {info.subtype})")

    dtype, scale = READ_SUBTYPES[info.subtype]
    try:
        frames, rate = sf.read(str(path), dtype=dtype, always_2d=True)
    except RuntimeError as exc:
        raise FormatError(f"cannot decode WAV: {exc}", path=str(path)) from exc
    return AudioBuffer(frames.T.astype(np.float64) * scale, int(rate))


def _encode(buf: AudioBuffer, fmt: str) -> np.ndarray:
    """Frames-by-channels array in the dtype soundfile writes for fmt."""
    frames = buf.channels.T
    if fmt == "f32":
        return frames.astype(np.float32)
    if fmt == "pcm16":
        scaled = frames * PCM16_SCALE
        rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
        return np.clip(rounded, -PCM16_SCALE, PCM16_SCALE - 1).astype(np.int16)
    raise UnsupportedError(f"unsupported WAV output format '{fmt}'")


def write_wav(path: Path, buf: AudioBuffer, fmt: str = "f32") -> None:
    """Write a WAV file ("f32" lossless, or "pcm16" rounded half away and clipped)."""
    path = Path(path)
    if fmt not in WRITE_FORMATS:
        raise UnsupportedError(f"unsupported WAV output format '{fmt}'")
    if not np.all(np.isfinite(buf.channels)):
        raise ValidationError("cannot write non-finite samples")
    subtype = WRITE_FORMATS[fmt]
    frames = _encode(buf, fmt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        sf.write(str(path), frames, buf.sample_rate, subtype=subtype, format="WAV")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from exc
    except RuntimeError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Polyphase Kaiser-windowed-sinc resampling to target_rate."""
    if target_rate <= 0:
        raise ValidationError("target_rate must be positive")
    if target_rate == buf.sample_rate:
        return buf
    g = math.gcd(int(target_rate), int(buf.sample_rate))
    up, down = int(target_rate) // g, int(buf.sample_rate) // g
    max_rate = max(up, down)
    taps = firwin(TAPS_PER_PHASE * max_rate + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
    out = resample_poly(buf.channels, up, down, axis=1, window=taps)
    n_out = int(round(buf.n_samples * target_rate / buf.sample_rate))
    fitted = np.zeros((buf.n_channels, n_out))
    keep = min(n_out, out.shape[1])
    fitted[:, :keep] = out[:, :keep]
    return AudioBuffer(fitted, int(target_rate))


def to_mono(buf: AudioBuffer) -> AudioBuffer:
    """Average all channels."""
    if buf.n_channels == 1:
        return buf
    return AudioBuffer(buf.channels.mean(axis=0, keepdims=True), buf.sample_rate)


def load_audio(path: Path, sample_rate: int) -> AudioBuffer:
    """Read a WAV as mono at the pipeline sample rate."""
    buf = to_mono(read_wav(path))
    if buf.sample_rate != sample_rate:
        logger.debug("Resampling %s from %d to %d Hz", Path(path).name, buf.sample_rate, sample_rate)
        buf = resample(buf, sample_rate)
    return buf
