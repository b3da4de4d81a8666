"""
Room impulse responses.

`trace_rir` combines a deterministic direct-path tap with a reverberant tail
synthesized from a stochastic ray-traced energy histogram. `image_source_rir`
is the exact specular-shoebox response and `image_source_energy` its
incoherent energy counterpart, the reference the traced histogram is checked
against. The remaining functions are decay analytics (Sabine/Eyring
predictions, Schroeder decay curves, RT60 fits).
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from acoustics import kernels
from acoustics.bands import apply_band_gains, deposit_taps, split_bands
from acoustics.scene import Scene, as_vec3, occlusion_factor
from core.config import NUM_BANDS, SPEED_OF_SOUND, TracerConfig
from core.errors import DomainError, DurationError, PlacementError, ValidationError

logger = logging.getLogger("sonicforge.rir")

RECEIVER_KINDS = ("mono", "ambisonics_fo", "array")
AMBISONIC_CHANNELS = ("W", "Y", "Z", "X")
MIN_DIRECT_DISTANCE = 1e-3
EDC_FLOOR_DB = -120.0
# Images are expanded into fractional-delay taps in batches of this size
IMAGE_BATCH = 100_000


# ----------------------------------------------------------------------
# Receivers
# ----------------------------------------------------------------------

def linear_array(n: int, spacing: float, axis: int = 0) -> List[Tuple[float, float, float]]:
    """Offsets of an n-element uniform linear array centred on the receiver."""
    if n < 1 or spacing <= 0:
        raise ValidationError("linear array needs n >= 1 and spacing > 0")
    offsets = []
    for k in range(n):
        p = [0.0, 0.0, 0.0]
        p[axis] = (k - (n - 1) / 2.0) * spacing
        offsets.append(tuple(p))
    return offsets


def circular_array(n: int, radius: float) -> List[Tuple[float, float, float]]:
    """Offsets of an n-element uniform circular array in the horizontal (x, z) plane."""
    if n < 1 or radius <= 0:
        raise ValidationError("circular array needs n >= 1 and radius > 0")
    return [
        (radius * math.cos(2 * math.pi * k / n), 0.0, radius * math.sin(2 * math.pi * k / n))
        for k in range(n)
    ]


@dataclass
class ReceiverConfig:
    """Microphone kind and geometry."""

    kind: str
    center: Tuple[float, float, float]
    element_offsets: List[Tuple[float, float, float]] = field(default_factory=list)
    capture_radius: float = 0.25

    def __post_init__(self):
        if self.kind not in RECEIVER_KINDS:
            raise ValidationError(f"unknown receiver kind '{self.kind}'")
        self.center = tuple(as_vec3(self.center, "receiver center").tolist())
        self.element_offsets = [tuple(as_vec3(o, "element offset").tolist()) for o in self.element_offsets]
        if self.kind == "array" and not self.element_offsets:
            raise ValidationError("array receiver needs at least one element")
        if self.capture_radius <= 0:
            raise ValidationError("capture_radius must be positive")

    @classmethod
    def from_layout(cls, center: Sequence[float], layout: Callable[..., Sequence[Sequence[float]]],
                    *args, capture_radius: float = 0.25, **kwargs) -> "ReceiverConfig":
        """Array receiver whose offsets come from any layout function."""
        offsets = [tuple(float(x) for x in o) for o in layout(*args, **kwargs)]
        return cls("array", tuple(center), offsets, capture_radius)

    @property
    def n_channels(self) -> int:
        if self.kind == "ambisonics_fo":
            return 4
        if self.kind == "array":
            return len(self.element_offsets)
        return 1

    def element_positions(self) -> List[np.ndarray]:
        c = np.asarray(self.center)
        if self.kind == "array":
            return [c + np.asarray(o) for o in self.element_offsets]
        return [c]


@dataclass
class RIRRequest:
    """Parameters of one traced impulse response."""

    source: Tuple[float, float, float]
    receiver: ReceiverConfig
    sample_rate: int = 16000
    seed: int = 0
    n_rays: int = 20000
    max_ir_seconds: float = 2.0
    max_bounces: int = 100
    bin_width: float = 0.001
    energy_floor: float = 1e-6
    air_absorption: bool = False
    air_attenuation_db_per_m: Tuple[float, ...] = tuple(TracerConfig().air_attenuation_db_per_m)
    n_chunks: int = 64

    def __post_init__(self):
        self.source = tuple(as_vec3(self.source, "source").tolist())
        if self.n_rays < 1:
            raise ValidationError("n_rays must be >= 1")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        if self.max_ir_seconds <= 0 or self.bin_width <= 0:
            raise ValidationError("max_ir_seconds and bin_width must be positive")
        if self.max_bounces < 0 or self.n_chunks < 1:
            raise ValidationError("max_bounces must be >= 0 and n_chunks >= 1")

    @classmethod
    def from_config(cls, tracer: TracerConfig, source: Sequence[float], receiver: ReceiverConfig,
                    sample_rate: int, seed: int) -> "RIRRequest":
        return cls(
            source=tuple(source),
            receiver=replace(receiver, capture_radius=tracer.capture_radius),
            sample_rate=sample_rate,
            seed=seed,
            n_rays=tracer.n_rays,
            max_ir_seconds=tracer.max_ir_seconds,
            max_bounces=tracer.max_bounces,
            bin_width=tracer.bin_width,
            energy_floor=tracer.energy_floor,
            air_absorption=tracer.air_absorption,
            air_attenuation_db_per_m=tuple(tracer.air_attenuation_db_per_m),
            n_chunks=tracer.n_chunks,
        )

    @property
    def n_samples(self) -> int:
        return int(round(self.max_ir_seconds * self.sample_rate))

    def air_db_per_m(self) -> np.ndarray:
        if not self.air_absorption:
            return np.zeros(NUM_BANDS)
        return np.asarray(self.air_attenuation_db_per_m, dtype=float)


@dataclass
class EnergyHistogram:
    """Traced energy per channel, band and time bin (source emits 1.0 per band).

    Traced bins hold the fraction of emitted energy crossing the capture
    sphere; `capture_radius == 0` marks bins already in the free-field
    1/d^2 convention (image-source energy).
    """

    bins: np.ndarray       # (C, B, T)
    signed: np.ndarray     # (C, T) direction-weighted signed energy
    bin_width: float
    capture_radius: float = 0.0
    direct: Optional[np.ndarray] = None   # (C, B) direct-sound energy, 1/d^2 convention
    direct_bin: int = 0

    @property
    def n_bins(self) -> int:
        return self.bins.shape[-1]

    def total_by_band(self) -> np.ndarray:
        """Total energy per channel and band, shape (C, B)."""
        return self.bins.sum(axis=-1)

    def envelope(self) -> np.ndarray:
        """Energy per channel, band and bin in the 1/d^2 convention, direct sound included."""
        scale = 4.0 / self.capture_radius ** 2 if self.capture_radius > 0 else 1.0
        env = self.bins * scale
        if self.direct is not None and self.direct_bin < self.n_bins:
            env[:, :, self.direct_bin] += self.direct
        return env


@dataclass
class ImpulseResponse:
    """Sampled multi-channel pressure response."""

    channels: np.ndarray   # (C, N)
    sample_rate: int
    source_position: Tuple[float, float, float]
    receiver_center: Tuple[float, float, float]
    histograms: List[EnergyHistogram] = field(default_factory=list)

    def __post_init__(self):
        self.channels = np.atleast_2d(np.asarray(self.channels, dtype=np.float64))
        if not np.all(np.isfinite(self.channels)):
            raise ValidationError("impulse response contains non-finite samples")

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def length(self) -> int:
        return self.channels.shape[1]


# ----------------------------------------------------------------------
# Tracing
# ----------------------------------------------------------------------

def _seed_u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def _ambisonic_gains(direction: np.ndarray) -> np.ndarray:
    """SN3D first-order gains in ACN order for a unit arrival direction (scene axes)."""
    x, y, z = direction
    return np.array([1.0, -z, y, x])


def trace_histogram(scene: Scene, req: RIRRequest, position: np.ndarray, seed: int,
                    ambisonic: bool = False) -> EnergyHistogram:
    """Trace req.n_rays from the source and histogram arrivals at one receiver point."""
    n_bins = int(math.ceil(req.max_ir_seconds / req.bin_width))
    n_channels = 4 if ambisonic else 1
    mode = kernels.MODE_AMBISONICS if ambisonic else kernels.MODE_OMNI
    energy, signed = kernels.trace_energy(
        np.asarray(req.source, dtype=np.float64), np.asarray(position, dtype=np.float64),
        int(req.n_rays), int(req.n_chunks), _seed_u64(seed), int(req.max_bounces),
        SPEED_OF_SOUND * req.max_ir_seconds, SPEED_OF_SOUND * req.bin_width, n_bins,
        float(req.receiver.capture_radius), float(req.energy_floor), req.air_db_per_m(),
        n_channels, mode,
        *scene.geometry_arrays(), scene.tri_normal, scene.tri_absorption, scene.tri_scatter,
    )
    # fixed-order reduction over chunks keeps results independent of thread count
    bins = np.zeros(energy.shape[1:])
    sig = np.zeros(signed.shape[1:])
    for chunk in range(energy.shape[0]):
        bins += energy[chunk]
        sig += signed[chunk]
    return EnergyHistogram(bins=bins, signed=sig, bin_width=req.bin_width,
                           capture_radius=float(req.receiver.capture_radius))


def synthesize_tail(hist: EnergyHistogram, sample_rate: int, n_samples: int, seed: int,
                    capture_radius: float) -> np.ndarray:
    """Noise-carrier pressure tail whose per-band energy envelope follows the histogram.

    Raw sphere-crossing energy is scaled by 4 / r^2 so a free-field arrival at
    distance d carries energy 1 / d^2, matching the direct tap convention.
    """
    scale = 4.0 / (capture_radius * capture_radius)
    samples_per_bin = hist.bin_width * sample_rate
    bin_of = np.minimum((np.arange(n_samples) / samples_per_bin).astype(np.int64), hist.n_bins - 1)
    counts = np.bincount(bin_of, minlength=hist.n_bins).astype(float)
    counts[counts == 0] = 1.0

    rng = np.random.default_rng(seed)
    carrier_bands = split_bands(rng.standard_normal(n_samples), sample_rate)

    n_channels = hist.bins.shape[0]
    tail = np.zeros((n_channels, n_samples))
    for c in range(n_channels):
        per_sample = hist.bins[c] * scale / counts[None, :]        # (B, T)
        envelope = np.sqrt(per_sample)[:, bin_of]                   # (B, N)
        sign = np.where(hist.signed[c] >= 0.0, 1.0, -1.0)[bin_of]
        tail[c] = sign * np.sum(envelope * carrier_bands, axis=0)
    return tail


def _direct_arrival(scene: Scene, req: RIRRequest, position: np.ndarray,
                    ambisonic: bool) -> Tuple[float, np.ndarray, np.ndarray]:
    """(distance, per-band pressure gain, per-channel gain) of the direct sound."""
    src = np.asarray(req.source)
    delta = src - position
    distance = float(np.linalg.norm(delta))
    if distance < MIN_DIRECT_DISTANCE:
        raise PlacementError(
            f"source and receiver {distance:.2e} m apart", constraint="direct path length >= 1 mm"
        )
    gains = np.sqrt(occlusion_factor(scene, src, position))
    gains = gains * np.sqrt(10.0 ** (-req.air_db_per_m() * distance / 10.0))
    channel_gain = _ambisonic_gains(delta / distance) if ambisonic else np.ones(1)
    return distance, gains, channel_gain


def direct_path(scene: Scene, req: RIRRequest, position: np.ndarray, ambisonic: bool = False) -> np.ndarray:
    """Deterministic direct tap, (1/d) * sqrt(occlusion) per band, at delay d/c."""
    distance, gains, channel_gain = _direct_arrival(scene, req, position, ambisonic)
    delay = distance / SPEED_OF_SOUND * req.sample_rate
    tap = deposit_taps(req.n_samples, np.array([delay]), np.array([1.0 / distance]))[0]
    banded = apply_band_gains(tap, gains, req.sample_rate)
    return channel_gain[:, None] * banded[None, :]


def _with_direct(hist: EnergyHistogram, scene: Scene, req: RIRRequest, position: np.ndarray,
                 ambisonic: bool) -> EnergyHistogram:
    distance, gains, channel_gain = _direct_arrival(scene, req, position, ambisonic)
    energy = (channel_gain ** 2)[:, None] * (gains ** 2)[None, :] / distance ** 2
    return replace(hist, direct=energy,
                   direct_bin=int(distance / (SPEED_OF_SOUND * hist.bin_width)))


def _check_placement(scene: Scene, req: RIRRequest) -> None:
    if not scene.contains(req.source):
        raise PlacementError(f"source {req.source} outside scene bounds", constraint="source inside scene")
    for k, position in enumerate(req.receiver.element_positions()):
        if not scene.contains(position):
            raise PlacementError(
                f"receiver element {k} at {tuple(position)} outside scene bounds",
                constraint="receiver inside scene",
            )


def trace_rir(scene: Scene, req: RIRRequest) -> ImpulseResponse:
    """Traced impulse response: direct tap plus histogram-driven reverberant tail.

    Array receivers trace each element independently with seed ^ element index.
    Ambisonic receivers return (W, Y, Z, X).
    """
    _check_placement(scene, req)
    ambisonic = req.receiver.kind == "ambisonics_fo"
    channels: List[np.ndarray] = []
    histograms: List[EnergyHistogram] = []
    for k, position in enumerate(req.receiver.element_positions()):
        element_seed = int(req.seed) ^ k
        direct = direct_path(scene, req, position, ambisonic=ambisonic)
        hist = _with_direct(trace_histogram(scene, req, position, element_seed, ambisonic=ambisonic),
                            scene, req, position, ambisonic)
        tail = synthesize_tail(hist, req.sample_rate, req.n_samples, element_seed,
                               req.receiver.capture_radius)
        channels.append(direct + tail)
        histograms.append(hist)
        logger.debug(
            "Traced element %d: band energy %s",
            k, np.array2string(hist.total_by_band()[0], precision=4),
        )
    return ImpulseResponse(
        channels=np.vstack(channels),
        sample_rate=req.sample_rate,
        source_position=req.source,
        receiver_center=req.receiver.center,
        histograms=histograms,
    )


def energy_by_band(hist: EnergyHistogram) -> np.ndarray:
    """Traced reverberant energy per channel and band."""
    return hist.total_by_band()


# ----------------------------------------------------------------------
# Image-source oracle
# ----------------------------------------------------------------------

def _axis_images(length: float, s: float, r: float, max_order: int, max_distance: float):
    n_max = min(max_order, int(math.ceil(max_distance / (2.0 * length))) + 1)
    n = np.arange(-n_max, n_max + 1)
    offsets, orders = [], []
    for p in (0, 1):
        offsets.append((1 - 2 * p) * s + 2.0 * n * length - r)
        orders.append(np.abs(n - p) + np.abs(n))
    offsets = np.concatenate(offsets)
    orders = np.concatenate(orders)
    keep = (orders <= max_order) & (np.abs(offsets) <= max_distance)
    return offsets[keep], orders[keep]


def _image_set(room_dims, source, receiver, band_absorption, max_order: int,
               max_ir_seconds: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Validated (src, rcv, alpha, image distances, reflection orders) of a shoebox."""
    dims = as_vec3(room_dims, "room_dims")
    src = as_vec3(source, "source")
    rcv = as_vec3(receiver, "receiver")
    if np.any(dims <= 0):
        raise ValidationError(f"degenerate room dimensions {dims.tolist()}")
    if not (np.all(src > 0) and np.all(src < dims)):
        raise PlacementError(f"source {src.tolist()} outside room", constraint="source inside room")
    if not (np.all(rcv > 0) and np.all(rcv < dims)):
        raise PlacementError(f"receiver {rcv.tolist()} outside room", constraint="receiver inside room")
    if max_order < 0:
        raise ValidationError("max_order must be >= 0")
    alpha = np.broadcast_to(np.asarray(band_absorption, dtype=float), (NUM_BANDS,))

    max_distance = SPEED_OF_SOUND * max_ir_seconds
    ax = [_axis_images(dims[k], src[k], rcv[k], max_order, max_distance) for k in range(3)]
    dist2 = (ax[0][0][:, None, None] ** 2 + ax[1][0][None, :, None] ** 2 + ax[2][0][None, None, :] ** 2)
    order = ax[0][1][:, None, None] + ax[1][1][None, :, None] + ax[2][1][None, None, :]
    keep = (order <= max_order) & (dist2 <= max_distance ** 2)
    return src, rcv, alpha, np.sqrt(dist2[keep]), order[keep].astype(np.int64)


def image_source_rir(
    room_dims: Sequence[float],
    source: Sequence[float],
    receiver: Sequence[float],
    band_absorption: Sequence[float],
    max_order: int,
    sample_rate: int,
    max_ir_seconds: float,
) -> ImpulseResponse:
    """Specular shoebox response by mirror images, room corner at the origin."""
    src, rcv, alpha, dist, order = _image_set(
        room_dims, source, receiver, band_absorption, max_order, max_ir_seconds
    )
    n_samples = int(round(max_ir_seconds * sample_rate))
    present = np.unique(order)
    row_of = np.searchsorted(present, order)
    rows = np.zeros((len(present), n_samples))
    for start in range(0, len(dist), IMAGE_BATCH):
        sl = slice(start, start + IMAGE_BATCH)
        rows += deposit_taps(n_samples, dist[sl] / SPEED_OF_SOUND * sample_rate, 1.0 / dist[sl],
                             rows=row_of[sl], n_rows=len(present))

    out = np.zeros(n_samples)
    for row, k in zip(rows, present):
        gains = (1.0 - alpha) ** (k / 2.0)
        out += apply_band_gains(row, gains, sample_rate)
    logger.debug("Image-source response: %d images up to order %d", len(dist), max_order)
    return ImpulseResponse(
        channels=out[None, :],
        sample_rate=sample_rate,
        source_position=tuple(src.tolist()),
        receiver_center=tuple(rcv.tolist()),
    )


def image_source_energy(
    room_dims: Sequence[float],
    source: Sequence[float],
    receiver: Sequence[float],
    band_absorption: Sequence[float],
    max_order: int,
    bin_width: float,
    max_ir_seconds: float,
) -> EnergyHistogram:
    """Incoherent image-source energy per band and time bin.

    Each image contributes (1 - alpha)^order / d^2 to the bin of its arrival
    time, which is the quantity the traced histogram estimates. Use this
    rather than the squared pressure oracle to compare decay curves: the
    coherent sum of positive taps piles up energy near DC.
    """
    if bin_width <= 0 or max_ir_seconds <= 0:
        raise ValidationError("bin_width and max_ir_seconds must be positive")
    _, _, alpha, dist, order = _image_set(
        room_dims, source, receiver, band_absorption, max_order, max_ir_seconds
    )
    n_bins = int(math.ceil(max_ir_seconds / bin_width))
    idx = (dist / (SPEED_OF_SOUND * bin_width)).astype(np.int64)
    keep = idx < n_bins
    idx, dist, order = idx[keep], dist[keep], order[keep]
    bins = np.zeros((1, NUM_BANDS, n_bins))
    for b in range(NUM_BANDS):
        bins[0, b] = np.bincount(idx, weights=(1.0 - alpha[b]) ** order / dist ** 2, minlength=n_bins)
    return EnergyHistogram(bins=bins, signed=bins.mean(axis=1), bin_width=float(bin_width))


# ----------------------------------------------------------------------
# Decay analytics
# ----------------------------------------------------------------------

def rt60_predict(room_dims: Sequence[float], band_absorption, formula: str = "sabine") -> np.ndarray:
    """Sabine or Eyring reverberation time per band for a uniform-absorption box."""
    dims = np.asarray(room_dims, dtype=float)
    if dims.shape != (3,) or np.any(dims <= 0):
        raise ValidationError(f"degenerate room dimensions {dims.tolist()}")
    alpha = np.atleast_1d(np.asarray(band_absorption, dtype=float))
    volume = float(np.prod(dims))
    area = 2.0 * (dims[0] * dims[1] + dims[1] * dims[2] + dims[0] * dims[2])
    if formula == "sabine":
        if np.any(alpha <= 0):
            raise DomainError("Sabine needs mean absorption > 0")
        return 0.161 * volume / (area * alpha)
    if formula == "eyring":
        if np.any(alpha <= 0) or np.any(alpha >= 1):
            raise DomainError("Eyring needs 0 < mean absorption < 1")
        return 0.161 * volume / (-area * np.log1p(-alpha))
    raise ValidationError(f"unknown RT60 formula '{formula}'")




def schroeder_db(energy: np.ndarray) -> np.ndarray:
    """Backward-integrated decay in dB along the last axis, floored at -120 dB."""
    energy = np.atleast_2d(np.asarray(energy, dtype=float))
    if not np.any(energy > 0):
        raise ValidationError("energy decay of an all-zero response")
    tail = np.cumsum(energy[:, ::-1], axis=1)[:, ::-1]
    total = tail[:, :1]
    with np.errstate(divide="ignore", invalid="ignore"):
        edc = 10.0 * np.log10(tail / total)
    edc = np.where(np.isfinite(edc), edc, EDC_FLOOR_DB)
    edc = np.maximum(edc, EDC_FLOOR_DB)
    # backward sums are non-increasing; pin away float noise
    return np.minimum.accumulate(edc, axis=1)


def energy_decay_curve(ir: ImpulseResponse) -> np.ndarray:
    """Schroeder backward-integrated decay in dB per channel, floored at -120 dB."""
    return schroeder_db(ir.channels ** 2)


def histogram_decay_curve(hist: EnergyHistogram, channel: int = 0) -> np.ndarray:
    """Schroeder decay in dB of a band-summed energy envelope, one value per bin."""
    return schroeder_db(hist.envelope()[channel].sum(axis=0))[0]


def _fit_rt60(edc: np.ndarray, rate: float, decay_db: float, start_db: float) -> float:
    stop_db = start_db - decay_db
    idx = np.flatnonzero((edc <= start_db) & (edc >= stop_db))
    if len(idx) < 2 or edc.min() > stop_db:
        raise DurationError(f"decay does not reach {stop_db:.0f} dB")
    slope, _ = np.polyfit(idx / float(rate), edc[idx], 1)
    if slope >= 0:
        raise DomainError("energy decay curve has no negative slope")
    return float(-60.0 / slope)


def rt60_estimate(ir: ImpulseResponse, channel: int = 0, decay_db: float = 30.0,
                  start_db: float = -5.0) -> float:
    """RT60 from a least-squares line over the EDC between start_db and start_db - decay_db."""
    return _fit_rt60(energy_decay_curve(ir)[channel], ir.sample_rate, decay_db, start_db)


def histogram_rt60(hist: EnergyHistogram, channel: int = 0, decay_db: float = 30.0,
                   start_db: float = -5.0) -> float:
    """RT60 fitted to a histogram's decay curve, bins as time steps."""
    return _fit_rt60(histogram_decay_curve(hist, channel), 1.0 / hist.bin_width, decay_db, start_db)


def decay_mismatch(hist: EnergyHistogram, reference: EnergyHistogram, span_db: float = 30.0,
                   channel: int = 0) -> float:
    """RMS dB difference of two decay curves over the bins where the reference is above -span_db."""
    if not math.isclose(hist.bin_width, reference.bin_width):
        raise ValidationError(f"bin widths differ: {hist.bin_width} vs {reference.bin_width}")
    n = min(hist.n_bins, reference.n_bins)
    ours = histogram_decay_curve(hist, channel)[:n]
    theirs = histogram_decay_curve(reference, 0)[:n]
    span = theirs >= -span_db
    return float(np.sqrt(np.mean((ours[span] - theirs[span]) ** 2)))
