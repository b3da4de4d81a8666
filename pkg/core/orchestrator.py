"""
Pipeline Orchestrators — coordinate the agents for batch runs.

GenerationOrchestrator, per group:
1. PlacementAgent      — mic / source / noise layout and trajectories
2. StemBuilderAgent    — arrange, normalize and render the five stems
3. QualityCriticAgent  — stem length, metadata schema and placement review
4. OutputWriterAgent   — stems, metadata and plan on disk

EvaluationOrchestrator runs the EvaluationAgent over a pairs manifest and
writes a JSON-lines report.

Groups are pure functions of (scene, pools, group seed), so the order in which
workers finish never changes what is written.
"""

import multiprocessing
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Tuple

import pandas as pd
from tqdm import tqdm

from acoustics.mixer import Pools
from acoustics.scene import load_scene
from agents.evaluation_agent import EvaluationAgent, split_paths
from agents.manifest_reader_agent import ManifestReaderAgent
from agents.output_writer_agent import OutputWriterAgent
from agents.placement_agent import PlacementAgent
from agents.quality_critic_agent import QualityCriticAgent
from agents.stem_builder_agent import StemBuilderAgent
from core.config import PipelineConfig
from core.errors import DataError, SonicForgeError
from core.logger import ProcessingLogger
from core.metrics import save_report_jsonl, summarize_report
from core.utils import derive_seed, group_id

SUMMARY_FILE = "summary.csv"
EVAL_MANIFEST_COLUMNS = {"id", "reference", "estimate"}


def resolve_scenes(scene_path: Path) -> List[Path]:
    """A single OBJ file, or every OBJ in a directory (sorted)."""
    scene_path = Path(scene_path)
    if scene_path.is_dir():
        scenes = sorted(scene_path.glob("*.obj"))
        if not scenes:
            raise DataError(f"no .obj scenes in {scene_path}")
        return scenes
    if not scene_path.exists():
        raise FileNotFoundError(f"Scene file not found: {scene_path}")
    return [scene_path]


def generate_group(config: PipelineConfig, index: int, scene_path: Path, pools: Pools) -> Dict[str, Any]:
    """Build, review and write one group. Runs in a worker process when --jobs > 1."""
    gid = group_id(index)
    logger = ProcessingLogger(log_path=config.log_dir / "groups" / f"{gid}.csv", level=config.log_level)
    seed = derive_seed(config.seed, "group", index)
    row: Dict[str, Any] = {
        "group_id": gid, "scene": Path(scene_path).name, "seed": seed,
        "status": "ok", "error": "", "issues": "",
    }
    try:
        scene = load_scene(scene_path, config.materials_path, config.walkable_height)
        plan = PlacementAgent(logger, config).execute({
            "scene": scene, "pools": pools, "seed": seed,
            "group_id": gid, "scene_name": Path(scene_path).stem,
        })
        result = StemBuilderAgent(logger, config).execute({"plan": plan, "group_id": gid})
        review = QualityCriticAgent(logger, config).execute({"plan": plan, "result": result, "group_id": gid})
        OutputWriterAgent(logger).execute({
            "group_dir": config.output_dir / gid, "plan": plan, "result": result, "group_id": gid,
        })
        if not review["passed"]:
            row["status"] = "flagged"
            row["issues"] = "; ".join(review["issues"])
        for name, value in sorted(result.loudness.items()):
            row[f"lufs_{name}"] = round(value, 3)
    except (SonicForgeError, FileNotFoundError) as exc:
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    except Exception as exc:
        # failures stay local to the group
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
        logger.log_error("Orchestrator", "generate_group", f"Unexpected {row['error']}",
                         record_id=gid, details=traceback.format_exc())
    return row


class GenerationOrchestrator:
    """Orchestrates batch group generation."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.logger = ProcessingLogger(
            log_path=config.log_dir / "processing_log.csv",
            level=config.log_level,
        )

    def run(self) -> Dict[str, Any]:
        """Generate config.n_groups groups.

        Returns:
            Dict with keys: groups (summary rows), failed, processing_time
        """
        self.logger.reset()
        self.logger.log(
            "Orchestrator", "pipeline_start", "INFO",
            f"Generating {self.config.n_groups} group(s) with seed {self.config.seed}",
        )
        start_time = time.time()

        pools = ManifestReaderAgent(self.logger, self.config.mix.n_sources).execute(self.config.pools_path)
        scenes = resolve_scenes(self.config.scene_path)
        tasks = [(i, scenes[i % len(scenes)]) for i in range(self.config.n_groups)]

        rows = self._run_tasks(tasks, pools)
        rows.sort(key=lambda r: r["group_id"])
        failed = sum(1 for r in rows if r["status"] != "ok")

        summary_path = self.config.output_dir / SUMMARY_FILE
        summary_path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows).to_csv(summary_path, index=False)

        processing_time = time.time() - start_time
        status = "SUCCESS" if failed == 0 else "ERROR"
        self.logger.log(
            "Orchestrator", "pipeline_complete", status,
            f"{len(rows) - failed}/{len(rows)} group(s) succeeded in {processing_time:.2f}s",
            details=str(summary_path),
        )
        return {"groups": rows, "failed": failed, "processing_time": processing_time}

    def _run_tasks(self, tasks: List[Tuple[int, Path]], pools: Pools) -> List[Dict[str, Any]]:
        rows: List[Dict[str, Any]] = []
        progress = tqdm(total=len(tasks), desc="groups", unit="group", file=sys.stderr)
        if self.config.jobs <= 1:
            for index, scene_path in tasks:
                rows.append(self._record(generate_group(self.config, index, scene_path, pools)))
                progress.update(1)
        else:
            # numba's thread pool does not survive fork
            context = multiprocessing.get_context("spawn")
            with ProcessPoolExecutor(max_workers=self.config.jobs, mp_context=context) as pool:
                futures = [
                    pool.submit(generate_group, self.config, index, scene_path, pools)
                    for index, scene_path in tasks
                ]
                for future in as_completed(futures):
                    rows.append(self._record(future.result()))
                    progress.update(1)
        progress.close()
        return rows

    def _record(self, row: Dict[str, Any]) -> Dict[str, Any]:
        gid = row["group_id"]
        if row["status"] == "ok":
            self.logger.log_success("Orchestrator", "group", "Group generated", record_id=gid)
        elif row["status"] == "flagged":
            self.logger.log_warning("Orchestrator", "group", row["issues"], record_id=gid)
        else:
            self.logger.log_error("Orchestrator", "group", row["error"], record_id=gid)
        return row


class EvaluationOrchestrator:
    """Scores a CSV manifest (id, reference, estimate) into a JSON-lines report."""

    def __init__(self, logger: ProcessingLogger, metrics: List[str], pit: bool = False,
                 keep_going: bool = False, jobs: int = 1):
        self.logger = logger
        self.agent = EvaluationAgent(logger, metrics, pit)
        self.keep_going = keep_going
        self.jobs = max(1, int(jobs))

    def _load_manifest(self, manifest_path: Path) -> List[Dict[str, Any]]:
        manifest_path = Path(manifest_path)
        if not manifest_path.exists():
            raise FileNotFoundError(f"Manifest not found: {manifest_path}")
        try:
            frame = pd.read_csv(manifest_path, dtype=str, keep_default_na=False)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise DataError(f"{manifest_path}: {exc}") from exc
        missing = EVAL_MANIFEST_COLUMNS - set(frame.columns)
        if missing:
            raise DataError(f"{manifest_path}: missing column(s) {sorted(missing)}")
        base = manifest_path.parent
        return [
            {
                "id": r["id"] or f"row{i}",
                "references": split_paths(r["reference"], base),
                "estimates": split_paths(r["estimate"], base),
            }
            for i, r in enumerate(frame.to_dict(orient="records"))
        ]

    def _score(self, record: Dict[str, Any]) -> Tuple[List[Dict[str, Any]], str]:
        try:
            return self.agent.execute(record), ""
        except (SonicForgeError, FileNotFoundError) as exc:
            message = f"{type(exc).__name__}: {exc}"
            self.logger.log_error("Orchestrator", "evaluate", message, record_id=record["id"])
            return [{"file": record["id"], "metric": "error", "value": message}], message

    def run(self, manifest_path: Path, output_path: Path) -> Dict[str, Any]:
        """Returns dict with keys: rows, failed, aborted, summary."""
        self.logger.log("Orchestrator", "evaluate_start", "INFO", f"Evaluating {manifest_path}")
        records = self._load_manifest(manifest_path)

        if self.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                outcomes = list(pool.map(self._score, records))
        else:
            outcomes = []
            for record in records:
                outcomes.append(self._score(record))
                if outcomes[-1][1] and not self.keep_going:
                    break

        rows: List[Dict[str, Any]] = []
        failed = 0
        aborted = False
        for record_rows, error in outcomes:
            rows.extend(record_rows)
            if error:
                failed += 1
                if not self.keep_going:
                    aborted = True
                    break

        frame = save_report_jsonl(rows, output_path)
        summary = summarize_report(frame[frame["metric"] != "error"]) if not frame.empty else pd.DataFrame()
        self.logger.log(
            "Orchestrator", "evaluate_complete", "ERROR" if aborted else "SUCCESS",
            f"{len(records)} row(s), {failed} failed -> {output_path}",
            details=summary.to_string(index=False) if not summary.empty else "",
        )
        return {"rows": rows, "failed": failed, "aborted": aborted, "summary": summary}
