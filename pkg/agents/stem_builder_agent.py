"""
Stem Builder Agent — arranges, normalizes and spatializes the five stems of a group.
"""

from typing import Any, Dict

from acoustics.mixer import GroupResult, MixPlan, build_group
from agents.base_agent import BaseAgent
from core.config import PipelineConfig
from core.logger import ProcessingLogger


class StemBuilderAgent(BaseAgent):
    """Agent that renders a MixPlan into stems and metadata."""

    def __init__(self, logger: ProcessingLogger, config: PipelineConfig):
        super().__init__("StemBuilderAgent", logger)
        self.config = config

    def execute(self, data: Dict[str, Any]) -> GroupResult:
        """Expects keys: plan, group_id."""
        plan: MixPlan = data["plan"]
        group = data.get("group_id", "")
        with self.guard("render", record_id=group):
            result = build_group(plan, self.config)

        for stem, names in result.dropped.items():
            if names:
                self.log_warning(
                    "arrange",
                    f"{stem}: dropped {len(names)} clip(s) overrunning {plan.clip_duration:g} s",
                    record_id=group,
                    details=", ".join(names),
                )
        levels = ", ".join(
            f"{name}={value:.2f}" for name, value in sorted(result.loudness.items())
        )
        self.log_success("render", f"Rendered {len(result.stems)} stems", record_id=group, details=levels)
        return result
