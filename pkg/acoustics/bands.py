"""
Octave-band helpers shared by the tracer, the image-source oracle and the
direct-path renderer.

The band split is an amplitude-complementary crossover bank: the six band
weights sum to exactly one at every frequency, so equal per-band gains give
back the broadband signal scaled by that gain.
"""

from typing import Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft

from core.config import BAND_CENTERS, NUM_BANDS
from core.errors import ValidationError

# Crossover transition width, in octaves, centred on each band edge
TRANSITION_OCTAVES = 0.5
FRACTIONAL_DELAY_TAPS = 32


def band_edges(centers: Sequence[float] = BAND_CENTERS) -> np.ndarray:
    """Crossover frequencies between adjacent band centers (geometric means)."""
    c = np.asarray(centers, dtype=float)
    return np.sqrt(c[:-1] * c[1:])


def crossover_weights(freqs: np.ndarray, centers: Sequence[float] = BAND_CENTERS) -> np.ndarray:
    """Band weights W[b, f] with sum over b equal to 1 for every frequency.

    The lowest band extends to DC and the highest to Nyquist.
    """
    freqs = np.asarray(freqs, dtype=float)
    edges = np.log2(band_edges(centers))
    with np.errstate(divide="ignore"):
        logf = np.where(freqs > 0, np.log2(np.maximum(freqs, 1e-12)), -np.inf)

    half = TRANSITION_OCTAVES / 2.0
    lowpass = np.empty((len(edges), freqs.size))
    for k, e in enumerate(edges):
        u = np.clip((logf - (e - half)) / TRANSITION_OCTAVES, 0.0, 1.0)
        lowpass[k] = 0.5 * (1.0 + np.cos(np.pi * u))

    n_bands = len(edges) + 1
    weights = np.empty((n_bands, freqs.size))
    weights[0] = lowpass[0]
    for b in range(1, n_bands - 1):
        weights[b] = lowpass[b] - lowpass[b - 1]
    weights[-1] = 1.0 - lowpass[-1]
    return weights


def apply_band_gains(
    signal: np.ndarray,
    gains: Sequence[float],
    sample_rate: float,
    pad: int = 4096,
) -> np.ndarray:
    """Filter a 1-D signal with the zero-phase response sum_b gains[b] * W_b.

    Equal gains short-circuit to a plain scale so the result is exact.
    """
    gains = np.asarray(gains, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if gains.shape != (NUM_BANDS,):
        raise ValidationError(f"expected {NUM_BANDS} band gains, got shape {gains.shape}")
    if np.all(gains == gains[0]):
        return signal * gains[0]

    n = signal.size + 2 * pad
    n_fft = sp_fft.next_fast_len(n, real=True)
    padded = np.zeros(n_fft)
    padded[pad:pad + signal.size] = signal
    freqs = sp_fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    response = gains @ crossover_weights(freqs)
    filtered = sp_fft.irfft(sp_fft.rfft(padded) * response, n=n_fft)
    return filtered[pad:pad + signal.size]


def split_bands(signal: np.ndarray, sample_rate: float) -> np.ndarray:
    """Split a signal into NUM_BANDS zero-phase band signals (circular filtering).

    The returned bands sum back to the input.
    """
    signal = np.asarray(signal, dtype=float)
    spectrum = sp_fft.rfft(signal)
    freqs = sp_fft.rfftfreq(signal.size, d=1.0 / sample_rate)
    weights = crossover_weights(freqs)
    return sp_fft.irfft(spectrum[None, :] * weights, n=signal.size, axis=-1)


def fractional_delay_taps(delays: np.ndarray, taps: int = FRACTIONAL_DELAY_TAPS) -> Tuple[np.ndarray, np.ndarray]:
    """Hann-windowed sinc interpolation taps for (possibly fractional) delays.

    Returns (indices, weights), both shaped (len(delays), taps). Integer delays
    produce a single unit weight.
    """
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    half = taps // 2
    base = np.floor(delays).astype(np.int64)
    offsets = np.arange(-half + 1, half + 1)
    indices = base[:, None] + offsets[None, :]
    u = indices - delays[:, None]
    window = np.where(np.abs(u) < half, 0.5 * (1.0 + np.cos(np.pi * u / half)), 0.0)
    weights = np.sinc(u) * window
    return indices, weights


def deposit_taps(
    n_samples: int,
    delays: np.ndarray,
    amplitudes: np.ndarray,
    rows: np.ndarray = None,
    n_rows: int = 1,
) -> np.ndarray:
    """Accumulate fractional-delay taps into an (n_rows, n_samples) buffer.

    `rows` assigns each tap to an output row (defaults to row 0).
    """
    out_len = n_rows * n_samples
    if len(delays) == 0:
        return np.zeros((n_rows, n_samples))
    indices, weights = fractional_delay_taps(delays)
    weights = weights * np.asarray(amplitudes, dtype=float)[:, None]
    if rows is None:
        rows = np.zeros(len(delays), dtype=np.int64)
    flat = indices + (np.asarray(rows, dtype=np.int64) * n_samples)[:, None]
    valid = (indices >= 0) & (indices < n_samples)
    acc = np.bincount(flat[valid], weights=weights[valid], minlength=out_len)
    return acc[:out_len].reshape(n_rows, n_samples)
