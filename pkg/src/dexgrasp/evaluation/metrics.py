"""Penetration, part accuracy and semantic contact metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from ..geometry.cloud import OrientedPointCloud, nearest_points, signed_penetration
from ..geometry.mesh import TriMesh
from ..geometry.voxel import intersection_volume

CONTACT_EPS = 0.005  # m, one binarisation threshold for every contact metric
VOXEL = 0.002  # m
SUCCESS_DEPTH_CM = 1.0
METRIC_COLUMNS = ("p_vol_cm3", "p_dep_cm", "sim_dis_cm", "sim_suc", "part_acc", "sc_ratio")


@dataclass
class MetricReport:
    p_vol_cm3: float
    p_dep_cm: float
    sim_dis_cm: Optional[float] = None
    sim_suc: Optional[bool] = None
    part_acc: Optional[bool] = None
    sc_ratio: Optional[float] = None
    excluded: Dict[str, bool] = field(default_factory=dict)  # e.g. {"simulation": True} for twist tasks

    def __post_init__(self):
        if self.p_vol_cm3 < 0 or self.p_dep_cm < 0:
            raise ValueError("penetration metrics are non-negative")
        if self.sc_ratio is not None and not 0.0 <= self.sc_ratio <= 1.0:
            raise ValueError("sc_ratio must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "MetricReport":
        return cls(**{k: d.get(k) for k in (*METRIC_COLUMNS, "excluded") if k in d})


def penetration_depth(hand_vertices, obj: OrientedPointCloud) -> float:
    """Largest positive signed penetration of any hand vertex (m)."""
    v = np.asarray(hand_vertices, dtype=float).reshape(-1, 3)
    if len(v) == 0:
        return 0.0
    return float(max(0.0, np.max(signed_penetration(v, obj))))


def penetration_metrics(hand: Sequence[TriMesh], obj_mesh: TriMesh, obj: OrientedPointCloud,
                        voxel: float = VOXEL) -> Tuple[float, float]:
    """(p_vol in cm^3, p_dep in cm); ``hand`` is the list of closed capsule meshes."""
    hand = [hand] if isinstance(hand, TriMesh) else list(hand)
    p_vol = intersection_volume(hand, obj_mesh, voxel)
    verts = np.concatenate([m.vertices for m in hand]) if hand else np.zeros((0, 3))
    return p_vol, 100.0 * penetration_depth(verts, obj)


def _gt_mask(obj: OrientedPointCloud, gt_parts: Iterable) -> np.ndarray:
    if obj.part_labels is None:
        raise ValueError("object cloud carries no part labels")
    names = {v: k for k, v in obj.part_names.items()}
    ids = {names[p] if isinstance(p, str) and p in names else p for p in gt_parts}
    ids = {int(i) for i in ids if not isinstance(i, str)}
    return np.isin(obj.part_labels, sorted(ids))


def contacting(vertices, obj: OrientedPointCloud, eps: float = CONTACT_EPS):
    """Nearest object index per vertex and a within-``eps`` mask."""
    idx, d = nearest_points(obj, np.asarray(vertices, dtype=float).reshape(-1, 3))
    return idx, d <= eps


def part_accuracy(finger_vertices, obj: OrientedPointCloud, gt_parts, eps: float = CONTACT_EPS) -> bool:
    """True when some finger vertex within ``eps`` of the object has a ground-truth nearest point.

    Uses the same nearest-point rule as the semantic contact ratio, so a true
    result always comes with a positive ratio.
    """
    v = np.asarray(finger_vertices, dtype=float).reshape(-1, 3)
    if len(v) == 0:
        return False
    gt = _gt_mask(obj, gt_parts)
    idx, touch = contacting(v, obj, eps)
    return bool(np.any(gt[idx[touch]]))


def semantic_contact_ratio(finger_vertices, obj: OrientedPointCloud, gt_parts, eps: float = CONTACT_EPS) -> float:
    """Share of contacting finger vertices whose nearest object point is on a ground-truth part."""
    v = np.asarray(finger_vertices, dtype=float).reshape(-1, 3)
    if len(v) == 0:
        return 0.0
    gt = _gt_mask(obj, gt_parts)
    idx, touch = contacting(v, obj, eps)
    if not touch.any():
        return 0.0
    return float(np.mean(gt[idx[touch]]))
