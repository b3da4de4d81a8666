"""
Evaluation Agent — scores one manifest row of reference/estimate WAV files.

A row carries an id plus ';'-separated reference and estimate paths. With PIT
enabled the estimates are first matched to references by the best permutation
under the first requested metric.
"""

from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence

from acoustics.audio_io import read_wav
from acoustics.synthesis import AudioBuffer
from agents.base_agent import BaseAgent
from core.errors import ConfigurationError, DataError, ValidationError
from core.logger import ProcessingLogger
from core.metrics import pit_select, si_snr, snr_loss

# metric name -> (score in dB, loss to minimise for PIT)
METRICS: Dict[str, Any] = {
    "snr": (lambda ref, est: -snr_loss(ref, est), snr_loss),
    "si_snr": (si_snr, lambda ref, est: -si_snr(ref, est)),
}


def split_paths(value: Any, base_dir: Path) -> List[Path]:
    """Split a ';'-separated path cell, resolving relative paths against base_dir."""
    if value is None or (isinstance(value, float) and value != value):
        return []
    paths = []
    for part in str(value).split(";"):
        part = part.strip()
        if part:
            path = Path(part)
            paths.append(path if path.is_absolute() else base_dir / path)
    return paths


class EvaluationAgent(BaseAgent):
    """Agent that computes SNR / SI-SNR rows for a reference/estimate set."""

    def __init__(self, logger: ProcessingLogger, metrics: Sequence[str] = ("si_snr",),
                 pit: bool = False):
        super().__init__("EvaluationAgent", logger)
        unknown = [m for m in metrics if m not in METRICS]
        if unknown or not metrics:
            raise ConfigurationError(
                f"unknown metric(s) {unknown}; choose from {sorted(METRICS)}"
            )
        self.metrics = list(metrics)
        self.pit = pit

    def execute(self, data: Dict[str, Any]) -> List[Dict[str, Any]]:
        """Expects keys: id, references, estimates (lists of paths)."""
        row_id = str(data.get("id", ""))
        refs_paths: List[Path] = data["references"]
        est_paths: List[Path] = data["estimates"]
        if not refs_paths or len(refs_paths) != len(est_paths):
            raise DataError(
                f"row {row_id}: {len(refs_paths)} references but {len(est_paths)} estimates"
            )
        refs = [self._load(p) for p in refs_paths]
        ests = [self._load(p) for p in est_paths]
        self.check_rates(refs, ests)

        order = list(range(len(ests)))
        rows: List[Dict[str, Any]] = []
        if self.pit and len(ests) > 1:
            loss: Callable = METRICS[self.metrics[0]][1]
            result = pit_select(refs, ests, pairwise=loss)
            order = list(result.assignment)
            status = "identity" if result.is_identity else "permuted"
            self.log("pit", "INFO", f"PIT assignment {result.assignment} ({status})", record_id=row_id)
            rows.append({"file": row_id, "metric": "pit_assignment",
                         "value": ",".join(str(i) for i in result.assignment)})

        for i, ref in enumerate(refs):
            est_index = order[i]
            for metric in self.metrics:
                score = METRICS[metric][0](ref, ests[est_index])
                rows.append({"file": str(est_paths[est_index]), "metric": metric, "value": float(score)})

        self.log_success("evaluate", f"Scored {len(refs)} source(s)", record_id=row_id)
        return rows

    def _load(self, path: Path) -> AudioBuffer:
        if not Path(path).exists():
            raise DataError(f"audio file not found: {path}")
        return read_wav(path)

    @staticmethod
    def check_rates(refs: Sequence[AudioBuffer], ests: Sequence[AudioBuffer]) -> None:
        rates = {b.sample_rate for b in list(refs) + list(ests)}
        if len(rates) > 1:
            raise ValidationError(f"mixed sample rates {sorted(rates)}")
