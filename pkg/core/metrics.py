"""
Metrics & training objectives.

Signal metrics (SNR loss, SI-SNR), permutation-invariant selection,
STFT/iSTFT and the spectral mask/magnitude losses, plus the JSON-lines
report writer used by `evaluate`.
"""

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import signal as sp_signal

from core.errors import ConfigurationError, DomainError, SizeError, ValidationError

logger = logging.getLogger("sonicforge.metrics")

CLAMP_DB = 60.0
MAX_PIT_SOURCES = 6
REPORT_FIELDS = ["file", "metric", "value"]

ArrayLike = Union[np.ndarray, Sequence[float], Any]


def _samples(x: ArrayLike) -> np.ndarray:
    """Flatten an AudioBuffer or array to float64 samples."""
    data = getattr(x, "channels", x)
    return np.asarray(data, dtype=np.float64).reshape(-1)


def _clamp(value: float, label: str) -> float:
    if value > CLAMP_DB or value < -CLAMP_DB or not np.isfinite(value):
        clamped = float(np.clip(np.nan_to_num(value, posinf=CLAMP_DB, neginf=-CLAMP_DB), -CLAMP_DB, CLAMP_DB))
        logger.debug("%s clamped from %s to %.1f dB", label, value, clamped)
        return clamped
    return float(value)


def _pair(ref: ArrayLike, est: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    r, e = _samples(ref), _samples(est)
    if r.shape != e.shape:
        raise ValidationError(f"length mismatch: {r.size} vs {e.size}")
    return r, e


def snr_loss(ref: ArrayLike, est: ArrayLike) -> float:
    """Negative SNR in dB: -10 log10(|x|^2 / |x - est|^2), clamped to +-60."""
    r, e = _pair(ref, est)
    signal_energy = float(np.dot(r, r))
    if signal_energy == 0.0:
        raise DomainError("reference is all zeros")
    error = r - e
    error_energy = float(np.dot(error, error))
    with np.errstate(divide="ignore"):
        value = -10.0 * np.log10(signal_energy / error_energy) if error_energy > 0 else -np.inf
    return _clamp(value, "snr_loss")


def si_snr(ref: ArrayLike, est: ArrayLike, zero_mean: bool = True) -> float:
    """Scale-invariant SNR in dB, clamped to +-60."""
    r, e = _pair(ref, est)
    if zero_mean:
        r = r - r.mean()
        e = e - e.mean()
    ref_energy = float(np.dot(r, r))
    if ref_energy == 0.0 or not np.any(e):
        raise DomainError("si_snr of a zero vector")
    target = (np.dot(e, r) / ref_energy) * r
    noise = e - target
    target_energy = float(np.dot(target, target))
    noise_energy = float(np.dot(noise, noise))
    if noise_energy == 0.0:
        return CLAMP_DB
    if target_energy == 0.0:
        return -CLAMP_DB
    return _clamp(10.0 * np.log10(target_energy / noise_energy), "si_snr")


@dataclass
class PermutationResult:
    """Best assignment of estimates to references."""

    assignment: Tuple[int, ...]     # assignment[i] = estimate index for reference i
    pair_losses: List[float]
    total: float

    @property
    def is_identity(self) -> bool:
        return self.assignment == tuple(range(len(self.assignment)))


def pit_select(refs: Sequence[ArrayLike], ests: Sequence[ArrayLike],
               pairwise: Callable[[ArrayLike, ArrayLike], float] = snr_loss) -> PermutationResult:
    """Exhaustive minimum-loss permutation over M <= 6 sources."""
    m = len(refs)
    if m != len(ests):
        raise ValidationError(f"{m} references but {len(ests)} estimates")
    if m > MAX_PIT_SOURCES:
        raise SizeError(f"exhaustive PIT limited to {MAX_PIT_SOURCES} sources, got {m}")
    if m == 0:
        raise ValidationError("no sources")
    losses = np.array([[pairwise(refs[i], ests[j]) for j in range(m)] for i in range(m)])
    best, best_total = None, np.inf
    for perm in itertools.permutations(range(m)):
        total = float(sum(losses[i, perm[i]] for i in range(m)))
        if total < best_total:
            best, best_total = perm, total
    return PermutationResult(
        assignment=tuple(best),
        pair_losses=[float(losses[i, best[i]]) for i in range(m)],
        total=best_total,
    )


# ----------------------------------------------------------------------
# Spectral representation
# ----------------------------------------------------------------------

@dataclass
class Spectrogram:
    """Complex STFT bins (F, T') with the analysis parameters needed to invert."""

    bins: np.ndarray
    window: int
    hop: int
    sample_rate: int
    n_samples: int

    @property
    def n_freqs(self) -> int:
        return self.bins.shape[-2]


def stft(x: ArrayLike, window: int = 512, hop: int = 256, sample_rate: int = 16000) -> Spectrogram:
    """Hann-window STFT with centred, zero-padded frames."""
    if hop <= 0 or hop > window:
        raise ConfigurationError(f"hop {hop} must be in (0, window={window}]")
    if not sp_signal.check_COLA("hann", window, window - hop):
        raise ConfigurationError(f"Hann window {window} with hop {hop} is not COLA")
    sample_rate = getattr(x, "sample_rate", sample_rate)
    samples = _samples(x)
    _, _, bins = sp_signal.stft(
        samples, fs=sample_rate, window="hann", nperseg=window, noverlap=window - hop,
        boundary="zeros", padded=True,
    )
    return Spectrogram(bins=bins, window=window, hop=hop, sample_rate=sample_rate, n_samples=samples.size)


def istft(spec: Spectrogram) -> np.ndarray:
    """Inverse of `stft`, trimmed to the original length."""
    _, samples = sp_signal.istft(
        spec.bins, fs=spec.sample_rate, window="hann", nperseg=spec.window,
        noverlap=spec.window - spec.hop, boundary=True,
    )
    out = np.zeros(spec.n_samples)
    keep = min(spec.n_samples, samples.size)
    out[:keep] = samples[:keep]
    return out


def _bins(x: Union[Spectrogram, np.ndarray]) -> np.ndarray:
    return np.asarray(x.bins if isinstance(x, Spectrogram) else x, dtype=np.complex128)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")


def ideal_crm(clean: Union[Spectrogram, np.ndarray], noisy: Union[Spectrogram, np.ndarray],
              eps: float = 1e-8) -> np.ndarray:
    """Complex ratio mask M with M * noisy ~= clean."""
    s, y = _bins(clean), _bins(noisy)
    _same_shape(s, y)
    return s * np.conj(y) / (np.abs(y) ** 2 + eps)


def crm_mse(est_mask, ideal_mask) -> float:
    """Mean squared magnitude of the complex mask error."""
    a, b = _bins(est_mask), _bins(ideal_mask)
    _same_shape(a, b)
    return float(np.mean(np.abs(a - b) ** 2))


def _complex_and_magnitude(est: np.ndarray, ref: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    diff = est - ref
    complex_term = diff.real ** 2 + diff.imag ** 2
    magnitude_term = (np.abs(est) - np.abs(ref)) ** 2
    return complex_term, magnitude_term


def complex_magnitude_loss(est_spec, ref_spec, weight: float = 0.5) -> float:
    """weight * complex loss + (1 - weight) * magnitude loss, mean-reduced."""
    if not 0.0 <= weight <= 1.0:
        raise ValidationError(f"weight {weight} outside [0, 1]")
    est, ref = _bins(est_spec), _bins(ref_spec)
    _same_shape(est, ref)
    lc, lm = _complex_and_magnitude(est, ref)
    return float(np.mean(weight * lc + (1.0 - weight) * lm))


def stagewise_loss(stage_specs: Sequence, ref_spec, stage_weights: Sequence[float]) -> float:
    """Weighted sum over stages of the mean complex plus magnitude loss."""
    if len(stage_specs) != len(stage_weights) or not stage_specs:
        raise ValidationError(
            f"{len(stage_specs)} stages but {len(stage_weights)} weights (need equal, >= 1)"
        )
    ref = _bins(ref_spec)
    total = 0.0
    for spec, w in zip(stage_specs, stage_weights):
        est = _bins(spec)
        _same_shape(est, ref)
        lc, lm = _complex_and_magnitude(est, ref)
        total += float(w) * float(np.mean(lc + lm))
    return total


# ----------------------------------------------------------------------
# Reports
# ----------------------------------------------------------------------

def save_report_jsonl(rows: List[Dict[str, Any]], output_path: Path) -> pd.DataFrame:
    """Write {file, metric, value} rows as JSON lines."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(rows, columns=REPORT_FIELDS)
    if frame.empty:
        output_path.write_text("", encoding="utf-8")
    else:
        frame.to_json(output_path, orient="records", lines=True)
    return frame


def summarize_report(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean, min and max per metric."""
    numeric = frame.assign(value=pd.to_numeric(frame["value"], errors="coerce")).dropna(subset=["value"])
    return numeric.groupby("metric")["value"].agg(["count", "mean", "min", "max"]).reset_index()
