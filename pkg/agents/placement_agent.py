"""
Placement Agent — samples the microphone, source and noise layout of a group.
"""

from typing import Any, Dict

from acoustics.mixer import MixPlan, plan_group
from agents.base_agent import BaseAgent
from core.config import PipelineConfig
from core.logger import ProcessingLogger


class PlacementAgent(BaseAgent):
    """Agent that turns (scene, pools, seed) into a MixPlan."""

    def __init__(self, logger: ProcessingLogger, config: PipelineConfig):
        super().__init__("PlacementAgent", logger)
        self.config = config

    def execute(self, data: Dict[str, Any]) -> MixPlan:
        """Expects keys: scene, pools, seed, group_id and optionally scene_name."""
        group = data.get("group_id", "")
        with self.guard("plan", record_id=group):
            plan = plan_group(
                data["scene"], data["pools"], data["seed"], self.config,
                scene_name=data.get("scene_name", ""),
            )

        for k, source in enumerate(plan.sources, start=1):
            traj = source.trajectory
            self.log(
                "plan", "DEBUG",
                f"source{k} speaker={source.speaker_id} path={traj.total_length:.2f} m "
                f"waypoints={len(traj.waypoints)}",
                record_id=group,
            )
        self.log_success(
            "plan",
            f"Placed mic at {tuple(round(v, 2) for v in plan.mic)} with {len(plan.sources)} moving sources",
            record_id=group,
            details=f"seed={plan.seed}",
        )
        return plan
