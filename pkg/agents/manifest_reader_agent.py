"""
Manifest Reader Agent — ingests the utterance/noise pool manifest.

Responsibilities:
- Parse the pool manifest JSON
- Drop rows whose audio file is missing (logged as WARNING)
- Fail the run when a required pool ends up empty
- Log ingestion counts
"""

from pathlib import Path

from acoustics.mixer import Pools, Utterance, load_manifest
from agents.base_agent import BaseAgent
from core.errors import DataError
from core.logger import ProcessingLogger


class ManifestReaderAgent(BaseAgent):
    """Agent that loads and validates the speech/noise/music pools."""

    def __init__(self, logger: ProcessingLogger, n_sources: int = 3):
        super().__init__("ManifestReaderAgent", logger)
        self.n_sources = n_sources

    def execute(self, manifest_path: Path) -> Pools:
        """Read the manifest and return pools restricted to existing files."""
        manifest_path = Path(manifest_path)
        with self.guard("ingest", record_id=manifest_path.name):
            pools = load_manifest(manifest_path)
            pools = self._drop_missing(pools)
            self._require(pools)

        self.log_success(
            "ingest",
            f"Pools loaded from {manifest_path.name}",
            details=f"speakers={len(pools.speakers)}, "
                    f"utterances={sum(len(v) for v in pools.speech.values())}, "
                    f"environmental={len(pools.environmental)}, music={len(pools.music)}",
        )
        return pools

    def _exists(self, utt: Utterance) -> bool:
        if Path(utt.path).exists():
            return True
        self.log_warning("ingest", f"Audio file missing, row skipped: {utt.path}")
        return False

    def _drop_missing(self, pools: Pools) -> Pools:
        speech = {}
        for speaker, utterances in pools.speech.items():
            kept = [u for u in utterances if self._exists(u)]
            if kept:
                speech[speaker] = kept
        return Pools(
            speech=speech,
            environmental=[u for u in pools.environmental if self._exists(u)],
            music=[u for u in pools.music if self._exists(u)],
        )

    def _require(self, pools: Pools) -> None:
        if pools.is_empty():
            raise DataError("pool manifest has no usable rows")
        if len(pools.speakers) < self.n_sources:
            raise DataError(
                f"need {self.n_sources} distinct speakers, manifest has {len(pools.speakers)}"
            )
        if not pools.environmental:
            raise DataError("manifest has no environmental noise rows")
        if not pools.music:
            raise DataError("manifest has no music rows")
