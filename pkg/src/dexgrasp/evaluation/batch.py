"""Per-grasp evaluation and task-level aggregation to CSV and JSON."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import EmptyBatch, SimulationDiverged
from ..geometry.cloud import OrientedPointCloud
from ..geometry.mesh import TriMesh
from ..hand.kinematics import GraspPose, HandKinematics
from ..hand.model import forward_kinematics, hand_meshes
from .metrics import METRIC_COLUMNS, MetricReport, part_accuracy, penetration_metrics, semantic_contact_ratio
from .simulation import SimConfig, simulate_displacement, simulation_success

SIM_COLUMNS = ("sim_dis_cm", "sim_suc")


@dataclass
class TaskMetrics:
    name: str
    report: MetricReport
    twist: bool = False


def evaluate_grasp(kin: HandKinematics, pose: GraspPose, obj_mesh: TriMesh, obj: OrientedPointCloud,
                   gt_parts: Optional[Sequence[str]] = None, twist: bool = False,
                   sim: Optional[SimConfig] = SimConfig()) -> MetricReport:
    """All metrics for one final grasp; simulation is skipped for twist tasks or ``sim=None``."""
    p_vol, p_dep = penetration_metrics(hand_meshes(kin, pose), obj_mesh, obj)
    surf = forward_kinematics(kin, pose)
    fingers = surf.vertices[surf.finger_vertices]
    report = MetricReport(p_vol, p_dep, excluded={"simulation": bool(twist)})
    if gt_parts:
        report.part_acc = part_accuracy(fingers, obj, gt_parts)
        report.sc_ratio = semantic_contact_ratio(fingers, obj, gt_parts)
    if sim is not None and not twist:
        try:
            res = simulate_displacement(surf.vertices, obj_mesh, obj, sim)
            report.sim_dis_cm = res.displacement_cm
            report.sim_suc = simulation_success(res, p_dep, sim)
        except SimulationDiverged:
            report.sim_dis_cm = float("inf")
            report.sim_suc = False
    return report


def _mean(values) -> Optional[float]:
    vals = [float(v) for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def batch_evaluate(tasks: Sequence[TaskMetrics]) -> Dict[str, object]:
    """Means over tasks; simulation columns skip twist-flagged tasks."""
    tasks = list(tasks)
    if not tasks:
        raise EmptyBatch("no tasks to aggregate")
    agg: Dict[str, object] = {}
    for col in METRIC_COLUMNS:
        pool = [t for t in tasks if not (col in SIM_COLUMNS and t.twist)]
        agg[col] = _mean(getattr(t.report, col) for t in pool)
    agg["n_tasks"] = len(tasks)
    agg["n_sim_tasks"] = sum(1 for t in tasks if not t.twist)
    return agg


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    return repr(float(v)) if isinstance(v, float) else v


def write_tables(tasks: Sequence[TaskMetrics], out_dir, stem: str = "metrics"):
    """One CSV row per task plus a JSON document with per-task rows and the aggregate."""
    agg = batch_evaluate(tasks)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["task", "twist", *METRIC_COLUMNS])
        for t in tasks:
            wr.writerow([t.name, int(t.twist), *(_cell(getattr(t.report, c)) for c in METRIC_COLUMNS)])
    rows: List[dict] = [{"task": t.name, "twist": t.twist, **{c: getattr(t.report, c) for c in METRIC_COLUMNS}}
                        for t in tasks]
    json_path.write_text(json.dumps({"aggregate": agg, "tasks": rows}, indent=2, sort_keys=True), encoding="utf-8")
    return csv_path, json_path
