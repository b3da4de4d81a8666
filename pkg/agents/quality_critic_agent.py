"""
Quality Critic Agent — validates a rendered group before it is written.

Checks:
- Every stem present, finite and exactly clip_duration x sample_rate samples
- Metadata against the bundled JSON schema (jsonschema, draft 7)
- start_end_points ordered, non-overlapping and inside the clip
- Per-source counts of audio / start_end_points / words agree
- Placement distances of the plan
"""

from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from jsonschema import Draft7Validator

from acoustics.mixer import GroupResult, MixPlan
from acoustics.trajectory import validate_placement
from agents.base_agent import BaseAgent
from core.config import PipelineConfig
from core.logger import ProcessingLogger
from core.utils import read_json


def _schema_issues(metadata: Dict[str, Any], schema: Dict[str, Any]) -> List[str]:
    validator = Draft7Validator(schema)
    errors = sorted(validator.iter_errors(metadata), key=lambda e: [str(p) for p in e.absolute_path])
    issues = []
    for error in errors:
        where = "/".join(str(p) for p in error.absolute_path)
        issues.append(f"{where}: {error.message}" if where else error.message)
    return issues


def _is_pair(pair: Any) -> bool:
    return (isinstance(pair, (list, tuple)) and len(pair) == 2
            and all(isinstance(v, int) and not isinstance(v, bool) for v in pair))


def check_metadata(metadata: Dict[str, Dict], schema: Dict[str, Any], n_total: int) -> List[str]:
    """Return schema and timeline violations for one group's metadata."""
    issues = _schema_issues(metadata, schema)
    properties = schema.get("properties", {})
    for stem, entry in metadata.items():
        if stem not in properties or not isinstance(entry, dict):
            continue
        # shape errors are already reported by the schema
        pairs = [p for p in entry.get("start_end_points", []) if _is_pair(p)]
        previous_end = 0
        for pair in pairs:
            start, end = pair
            if not 0 <= start < end <= n_total:
                issues.append(f"{stem}: pair {pair} outside [0, {n_total}]")
            if start < previous_end:
                issues.append(f"{stem}: pair {pair} overlaps the previous clip")
            previous_end = end
        audio = entry.get("audio", [])
        if audio and len(audio) != len(pairs):
            issues.append(f"{stem}: {len(audio)} audio names for {len(pairs)} pairs")
        if "words" in entry and len(entry["words"]) != len(pairs):
            issues.append(f"{stem}: {len(entry['words'])} transcripts for {len(pairs)} pairs")
    return issues


class QualityCriticAgent(BaseAgent):
    """Agent that reviews rendered groups and flags issues."""

    def __init__(self, logger: ProcessingLogger, config: PipelineConfig,
                 schema_path: Optional[Path] = None):
        super().__init__("QualityCriticAgent", logger)
        self.config = config
        self.schema = read_json(schema_path or config.metadata_schema_path)

    def execute(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Expects keys: plan, result, group_id. Returns {issues, passed}."""
        plan: MixPlan = data["plan"]
        result: GroupResult = data["result"]
        group = data.get("group_id", "")

        issues = self._review(plan, result)
        if issues:
            self.log_warning("review", f"Issues found: {issues}", record_id=group)
        else:
            self.log_success("review", "Group passed quality check", record_id=group)
        return {"issues": issues, "passed": not issues}

    def _review(self, plan: MixPlan, result: GroupResult) -> List[str]:
        issues: List[str] = []
        n_total = int(round(plan.clip_duration * plan.sample_rate))

        # 1. Stem shape
        for stem in self.schema.get("required", []):
            buf = result.stems.get(stem)
            if buf is None:
                issues.append(f"Missing stem: {stem}")
                continue
            if buf.n_samples != n_total:
                issues.append(f"{stem}: {buf.n_samples} samples, expected {n_total}")
            if not np.all(np.isfinite(buf.channels)):
                issues.append(f"{stem}: non-finite samples")

        # 2. Metadata
        issues.extend(check_metadata(result.metadata, self.schema, n_total))

        # 3. Placement
        mix = self.config.mix
        noise = [plan.noise.position, plan.music.position]
        for k, source in enumerate(plan.sources, start=1):
            report = validate_placement(plan.mic, source.start, source.end, noise,
                                        mix.min_distance, mix.max_distance)
            issues.extend(f"source{k}: {v}" for v in report.violations)
        return issues
