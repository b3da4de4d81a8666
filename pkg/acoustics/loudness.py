"""
Integrated loudness (BS.1770-4) and LUFS normalization.

Mono and stereo go through pyloudnorm's meter. Wider layouts (ambisonics,
arrays) reuse its K-weighting stages with the same gating, every channel
summed with unit weight.
"""

import logging
import warnings
from typing import NamedTuple

import numpy as np
import pyloudnorm as pyln
from pyloudnorm.iirfilter import IIRfilter

from acoustics.synthesis import AudioBuffer
from core.errors import CannotNormalizeError, DurationError

logger = logging.getLogger("sonicforge.loudness")

BLOCK_SECONDS = 0.4
OVERLAP = 0.75
ABSOLUTE_GATE = -70.0
RELATIVE_GATE = -10.0
LOUDNESS_OFFSET = -0.691


class NormalizeResult(NamedTuple):
    buffer: AudioBuffer
    gain: float


def k_weighting(samples: np.ndarray, sample_rate: int) -> np.ndarray:
    """Apply the shelving and high-pass pre-filter stages along the last axis."""
    shelf = IIRfilter(4.0, 1.0 / np.sqrt(2.0), 1500.0, sample_rate, "high_shelf")
    highpass = IIRfilter(0.0, 0.5, 38.0, sample_rate, "high_pass")
    return highpass.apply_filter(shelf.apply_filter(samples))


def block_loudness(buf: AudioBuffer) -> np.ndarray:
    """Channel-summed mean-square power of each 400 ms gating block."""
    block = int(round(BLOCK_SECONDS * buf.sample_rate))
    if buf.n_samples < block:
        raise DurationError(
            f"{buf.duration:.3f} s is shorter than one {BLOCK_SECONDS:g} s gating block"
        )
    hop = int(round(block * (1.0 - OVERLAP)))
    weighted = k_weighting(buf.channels, buf.sample_rate)
    power = np.sum(weighted ** 2, axis=0)
    cumulative = np.concatenate([[0.0], np.cumsum(power)])
    starts = np.arange(0, buf.n_samples - block + 1, hop)
    return (cumulative[starts + block] - cumulative[starts]) / block


def _to_lufs(z):
    with np.errstate(divide="ignore"):
        return LOUDNESS_OFFSET + 10.0 * np.log10(z)


def _meter_lufs(buf: AudioBuffer) -> float:
    if buf.n_samples < int(round(BLOCK_SECONDS * buf.sample_rate)):
        raise DurationError(
            f"{buf.duration:.3f} s is shorter than one {BLOCK_SECONDS:g} s gating block"
        )
    if not np.any(buf.channels):
        return float("-inf")
    data = buf.channels[0] if buf.n_channels == 1 else buf.channels.T
    meter = pyln.Meter(buf.sample_rate, block_size=BLOCK_SECONDS)
    # fully gated input comes back as nan or -inf depending on the pyloudnorm version
    with warnings.catch_warnings(), np.errstate(divide="ignore", invalid="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        level = meter.integrated_loudness(np.ascontiguousarray(data, dtype=np.float64))
    return float(level) if np.isfinite(level) else float("-inf")


def measure_lufs(buf: AudioBuffer) -> float:
    """Gated integrated loudness in LUFS; -inf for digital silence."""
    if buf.n_channels <= 2:
        return _meter_lufs(buf)
    z = block_loudness(buf)
    levels = _to_lufs(z)
    above_abs = levels > ABSOLUTE_GATE
    if not np.any(above_abs):
        return float("-inf")
    relative = _to_lufs(z[above_abs].mean()) + RELATIVE_GATE
    gated = above_abs & (levels > relative)
    return float(_to_lufs(z[gated].mean()))


def normalize_to(buf: AudioBuffer, target: float) -> NormalizeResult:
    """Scale to the target loudness with one measure-correct iteration."""
    level = measure_lufs(buf)
    if not np.isfinite(level):
        raise CannotNormalizeError("cannot normalize a silent signal")
    gain = 10.0 ** ((target - level) / 20.0)
    corrected = measure_lufs(buf.scaled(gain))
    if np.isfinite(corrected):
        gain *= 10.0 ** ((target - corrected) / 20.0)
    logger.debug("Loudness %.2f LUFS -> %.2f LUFS (gain %.4f)", level, target, gain)
    return NormalizeResult(buf.scaled(gain), float(gain))
