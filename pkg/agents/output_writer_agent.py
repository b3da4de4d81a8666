"""
Output Writer Agent — persists one group: stem WAVs, metadata JSON and plan JSON.
"""

from pathlib import Path
from typing import Any, Dict

from acoustics.audio_io import write_wav
from acoustics.mixer import GroupResult, MixPlan
from agents.base_agent import BaseAgent
from core.logger import ProcessingLogger
from core.utils import write_json

METADATA_FILE = "metadata.json"
PLAN_FILE = "plan.json"


class OutputWriterAgent(BaseAgent):
    """Agent that writes a rendered group to its output directory."""

    def __init__(self, logger: ProcessingLogger, wav_format: str = "f32"):
        super().__init__("OutputWriterAgent", logger)
        self.wav_format = wav_format

    def execute(self, data: Dict[str, Any]) -> Dict[str, Path]:
        """Expects keys: group_dir, plan, result, group_id. Returns written paths."""
        group_dir = Path(data["group_dir"])
        plan: MixPlan = data["plan"]
        result: GroupResult = data["result"]
        group = data.get("group_id", group_dir.name)

        written: Dict[str, Path] = {}
        with self.guard("write", record_id=group):
            for stem, buf in result.stems.items():
                path = group_dir / f"{stem}.wav"
                write_wav(path, buf, self.wav_format)
                written[stem] = path
            written["metadata"] = group_dir / METADATA_FILE
            write_json(written["metadata"], result.metadata)
            written["plan"] = group_dir / PLAN_FILE
            placements = {stem: entry["start_end_points"] for stem, entry in result.metadata.items()}
            write_json(written["plan"], plan.to_dict(placements))

        self.log_success("write", f"Wrote {len(result.stems)} stems to {group_dir}", record_id=group)
        return written
