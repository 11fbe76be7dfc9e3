"""Geometric checks on candidate rotations and on selected thumb/index contact points."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DegenerateForceAxis, EmptyCloud
from .geometry.cloud import OrientedPointCloud
from .geometry.mesh import normalize
from .hand.kinematics import GraspPose, HandKinematics
from .hand.model import palm_and_finger_directions


@dataclass(frozen=True)
class VerificationConfig:
    tau_n: float = 0.85  # |cos| between finger axis and some local normal
    tau_m: float = 0.7  # signed cos between force axis and some local normal
    radius: float = 0.015  # m, neighbourhood for local normals
    max_neighbors: int = 64
    always_filter: bool = False  # also filter rotations when point-level contacts exist

    def __post_init__(self):
        for name in ("tau_n", "tau_m"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.radius < 0 or self.max_neighbors < 1:
            raise ConfigError("neighbour radius must be >= 0 and the cap >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


def local_normals(obj: OrientedPointCloud, p, radius: float, cap: int) -> Tuple[np.ndarray, np.ndarray]:
    """Indices and normals of cloud points within ``radius`` of ``p``, at most ``cap`` of them.

    The single nearest point is always included, so a zero radius yields
    the normal at ``p`` itself. When the ball holds more than ``cap`` points,
    an even stride over the distance-sorted set is kept so the patch still
    spans the whole radius instead of shrinking to the nearest few.
    """
    if len(obj) == 0:
        raise EmptyCloud("object cloud is empty")
    p = np.asarray(p, dtype=float)
    _, nearest = obj.tree.query(p)
    ball = np.array(obj.tree.query_ball_point(p, radius), dtype=int)
    ball = ball[ball != nearest]
    d = np.linalg.norm(obj.points[ball] - p, axis=1)
    ball = ball[np.lexsort((ball, d))]
    room = max(cap - 1, 0)
    if len(ball) > room:
        ball = ball[np.linspace(0, len(ball) - 1, room).round().astype(int)] if room else ball[:0]
    idx = np.concatenate([[nearest], ball]).astype(int)
    return idx, obj.normals[idx]


def ray_hit(origin, direction, obj: OrientedPointCloud, tube: float = None) -> int:
    """Index of the cloud point where the ray leaves the object.

    Points within ``tube`` of the ray ahead of the origin are candidates; the
    first one whose normal faces along the ray (an exit crossing) wins, else
    the first candidate. With no point in the tube, the point closest to the
    ray is used.
    """
    o = np.asarray(origin, dtype=float)
    d = normalize(np.asarray(direction, dtype=float))
    rel = obj.points - o
    t = rel @ d
    perp = np.linalg.norm(rel - t[:, None] * d, axis=1)
    if tube is None:
        tube = max(1.5 * obj.mean_spacing, 1e-6)
    inside = (t > 0) & (perp <= tube)
    if inside.any():
        cand = np.flatnonzero(inside)
        exits = cand[obj.normals[cand] @ d > 0]
        pool = exits if len(exits) else cand
        return int(pool[np.argmin(t[pool])])
    ahead = np.where(t > 0, perp, np.inf)
    if np.isfinite(ahead).any():
        return int(np.argmin(ahead))
    return int(np.argmin(perp))


def nearest_contact_surface_point(center, direction, obj: OrientedPointCloud,
                                  cfg: VerificationConfig = VerificationConfig()):
    """Surface point ``p*`` hit by the ray from ``center`` along ``direction`` and its neighbour normals."""
    if len(obj) == 0:
        raise EmptyCloud("object cloud is empty")
    hit = ray_hit(center, direction, obj)
    p = obj.points[hit]
    _, normals = local_normals(obj, p, cfg.radius, cfg.max_neighbors)
    return p, normals


def finger_alignment(d_finger, normals) -> float:
    """Largest |cos| between the finger axis and any of ``normals``."""
    n = normalize(np.asarray(normals, dtype=float).reshape(-1, 3))
    f = normalize(np.asarray(d_finger, dtype=float))
    return float(np.max(np.abs(n @ f))) if len(n) else 0.0


def filter_rotation_candidates(kin: HandKinematics, candidates: Sequence[GraspPose], normals,
                               tau_n: float = 0.85) -> List[int]:
    """Indices of candidates whose finger axis is within ``tau_n`` (|cos|) of some local normal."""
    keep = []
    for i, pose in enumerate(candidates):
        _, d_finger = palm_and_finger_directions(kin, pose)
        if finger_alignment(d_finger, normals) >= tau_n:
            keep.append(i)
    return keep


def force_support(force, normals) -> float:
    """Largest signed cos between the force axis and any of ``normals``."""
    f = np.asarray(force, dtype=float)
    nf = np.linalg.norm(f)
    if nf < 1e-6:
        raise DegenerateForceAxis("thumb and index contacts coincide")
    n = normalize(np.asarray(normals, dtype=float).reshape(-1, 3))
    return float(np.max(n @ (f / nf))) if len(n) else -1.0


def validate_point_contacts(p_thumb, p_index, thumb_normals, index_normals, tau_m: float = 0.7) -> bool:
    """Both fingers need a neighbour normal aligned with their squeezing axis.

    The thumb axis points from the index contact to the thumb contact and the
    index axis is its negation, so outward normals on opposite sides of the
    object satisfy the test.
    """
    f_thumb = np.asarray(p_thumb, dtype=float) - np.asarray(p_index, dtype=float)
    ok_thumb = force_support(f_thumb, thumb_normals) >= tau_m
    ok_index = force_support(-f_thumb, index_normals) >= tau_m
    return bool(ok_thumb and ok_index)


def point_pair_score(p_thumb, p_index, thumb_normals, index_normals) -> float:
    """Weaker of the two finger supports; the validity margin used to rank pairs."""
    f = np.asarray(p_thumb, dtype=float) - np.asarray(p_index, dtype=float)
    return min(force_support(f, thumb_normals), force_support(-f, index_normals))
