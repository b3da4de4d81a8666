"""
Static and moving source rendering.

A moving source is rendered as a crossfade between the convolutions of the
dry signal with the RIRs at the two positions bracketing the source's arc
length at each output sample.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import fft as sp_fft

from acoustics.rir import ImpulseResponse, ReceiverConfig, RIRRequest, trace_rir
from acoustics.scene import Scene, as_vec3
from acoustics.trajectory import RirPosition, Trajectory, sample_rir_positions
from core.config import RenderConfig, TracerConfig
from core.errors import DomainError, ValidationError
from core.utils import derive_seed

logger = logging.getLogger("sonicforge.synthesis")

DEFAULT_BLOCK = 8192


@dataclass
class AudioBuffer:
    """Multi-channel float signal, shape (C, N)."""

    channels: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.channels = np.atleast_2d(np.asarray(self.channels, dtype=np.float64))
        if self.channels.ndim != 2:
            raise ValidationError("audio channels must be a (C, N) array")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        if not np.all(np.isfinite(self.channels)):
            raise ValidationError("audio contains non-finite samples")

    @classmethod
    def mono(cls, samples: Sequence[float], sample_rate: int) -> "AudioBuffer":
        return cls(np.asarray(samples, dtype=np.float64)[None, :], sample_rate)

    @classmethod
    def silence(cls, n_samples: int, sample_rate: int, n_channels: int = 1) -> "AudioBuffer":
        return cls(np.zeros((n_channels, n_samples)), sample_rate)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / float(self.sample_rate)

    def scaled(self, gain: float) -> "AudioBuffer":
        return AudioBuffer(self.channels * gain, self.sample_rate)

    def fit_length(self, n_samples: int) -> "AudioBuffer":
        """Truncate or zero-pad to exactly n_samples."""
        out = np.zeros((self.n_channels, n_samples))
        keep = min(n_samples, self.n_samples)
        out[:, :keep] = self.channels[:, :keep]
        return AudioBuffer(out, self.sample_rate)


def overlap_add(x: np.ndarray, h: np.ndarray, block: int = DEFAULT_BLOCK) -> np.ndarray:
    """Linear convolution of 1-D x and h by FFT overlap-add."""
    n, m = len(x), len(h)
    if n == 0 or m == 0:
        return np.zeros(max(n + m - 1, 0))
    out_len = n + m - 1
    nfft = sp_fft.next_fast_len(block + m - 1, real=True)
    spectrum = sp_fft.rfft(h, nfft)
    out = np.zeros(out_len + nfft)
    for start in range(0, n, block):
        chunk = x[start:start + block]
        seg = sp_fft.irfft(sp_fft.rfft(chunk, nfft) * spectrum, nfft)
        out[start:start + nfft] += seg
    return out[:out_len]


def _convolve_range(x: np.ndarray, h: np.ndarray, lo: int, hi: int, block: int) -> np.ndarray:
    """Samples [lo, hi) of the full linear convolution x * h."""
    first = max(0, lo - len(h) + 1)
    y = overlap_add(x[first:min(hi, len(x))], h, block)
    out = np.zeros(hi - lo)
    offset = lo - first
    avail = y[offset:offset + (hi - lo)]
    out[:len(avail)] = avail
    return out


def convolve(dry: AudioBuffer, ir: ImpulseResponse, block: int = DEFAULT_BLOCK) -> AudioBuffer:
    """Per-channel linear convolution of a mono signal with an impulse response."""
    if dry.sample_rate != ir.sample_rate:
        raise ValidationError(f"sample rate mismatch: {dry.sample_rate} vs {ir.sample_rate}")
    if dry.n_channels != 1:
        raise ValidationError("dry signal must be mono")
    x = dry.channels[0]
    return AudioBuffer(np.vstack([overlap_add(x, h, block) for h in ir.channels]), dry.sample_rate)


def interp_weight(r_j: Sequence[float], r_j1: Sequence[float], r_t: Sequence[float]) -> float:
    """Crossfade weight: 0 at r_j, 1 at r_j1, distance ratio in between."""
    a = as_vec3(r_j)
    b = as_vec3(r_j1)
    t = as_vec3(r_t)
    span = float(np.linalg.norm(b - a))
    if span <= 0.0:
        raise DomainError("interpolation endpoints coincide")
    return float(np.clip(np.linalg.norm(t - a) / span, 0.0, 1.0))


@dataclass
class MovingRender:
    """RIRs sampled along a trajectory."""

    positions: List[RirPosition]
    rirs: List[ImpulseResponse]
    trajectory: Trajectory

    def __post_init__(self):
        if len(self.positions) != len(self.rirs) or len(self.rirs) < 2:
            raise ValidationError("moving render needs matching positions and rirs, at least 2")
        rates = {ir.sample_rate for ir in self.rirs}
        counts = {ir.n_channels for ir in self.rirs}
        if len(rates) != 1 or len(counts) != 1:
            raise ValidationError("all RIRs must share sample rate and channel count")

    @property
    def arcs(self) -> np.ndarray:
        return np.array([p.arc_length for p in self.positions], dtype=float)


def render_moving(dry: AudioBuffer, mr: MovingRender, block: int = DEFAULT_BLOCK) -> AudioBuffer:
    """Crossfade adjacent-position convolutions along the trajectory.

    Output sample t mixes y_j and y_{j+1} with alpha from the arc length
    speed * t; samples after the source stops use the last pair at alpha = 1.
    """
    if dry.n_channels != 1:
        raise ValidationError("dry signal must be mono")
    sr = dry.sample_rate
    if mr.rirs[0].sample_rate != sr:
        raise ValidationError(f"sample rate mismatch: {sr} vs {mr.rirs[0].sample_rate}")
    traj = mr.trajectory
    if traj.duration is None or abs(traj.duration * sr - dry.n_samples) > 1.0:
        raise ValidationError("trajectory duration must equal the dry signal duration")

    x = dry.channels[0]
    ir_len = max(ir.length for ir in mr.rirs)
    out_len = dry.n_samples + ir_len - 1
    n_channels = mr.rirs[0].n_channels
    arcs = mr.arcs

    s = np.minimum(traj.total_length * np.arange(out_len) / (traj.duration * sr), arcs[-1])
    seg = np.clip(np.searchsorted(arcs, s, side="right") - 1, 0, len(arcs) - 2)
    alpha = np.clip((s - arcs[seg]) / (arcs[seg + 1] - arcs[seg]), 0.0, 1.0)

    out = np.zeros((n_channels, out_len))
    boundaries = np.flatnonzero(np.diff(seg)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [out_len]])
    for lo, hi in zip(starts, ends):
        j = int(seg[lo])
        a = alpha[lo:hi]
        for c in range(n_channels):
            h0 = mr.rirs[j].channels[c]
            h1 = mr.rirs[j + 1].channels[c]
            y0 = _convolve_range(x, h0, lo, hi, block)
            y1 = _convolve_range(x, h1, lo, hi, block)
            out[c, lo:hi] = (1.0 - a) * y0 + a * y1
    return AudioBuffer(out, sr)


def build_moving_render(
    scene: Scene,
    trajectory: Trajectory,
    receiver: ReceiverConfig,
    sample_rate: int,
    seed: int,
    tracer: Optional[TracerConfig] = None,
    render: Optional[RenderConfig] = None,
) -> MovingRender:
    """Trace one RIR per sampled trajectory position."""
    tracer = tracer or TracerConfig()
    render = render or RenderConfig()
    positions = sample_rir_positions(trajectory, render.rir_spacing)
    rirs = []
    for k, pos in enumerate(positions):
        req = RIRRequest.from_config(tracer, tuple(pos.position), receiver, sample_rate,
                                     derive_seed(seed, "position", k))
        rirs.append(trace_rir(scene, req))
    logger.debug("Traced %d RIRs along %.2f m", len(rirs), trajectory.total_length)
    return MovingRender(positions=positions, rirs=rirs, trajectory=trajectory)


def render_static(
    dry: AudioBuffer,
    scene: Scene,
    source: Sequence[float],
    receiver: ReceiverConfig,
    seed: int = 0,
    tracer: Optional[TracerConfig] = None,
    block: int = DEFAULT_BLOCK,
) -> AudioBuffer:
    """Trace the RIR for a fixed source and convolve."""
    req = RIRRequest.from_config(tracer or TracerConfig(), tuple(source), receiver, dry.sample_rate, seed)
    return convolve(dry, trace_rir(scene, req), block)
