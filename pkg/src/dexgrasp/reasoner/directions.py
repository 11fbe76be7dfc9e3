"""Camera-anchored direction vocabulary, hull placement and palm-aligned rotation candidates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import DegenerateFrame
from ..geometry.hull import ConvexHull, Ray, ray_hull_intersect
from ..geometry.mesh import normalize
from ..hand.kinematics import GraspPose, HandKinematics

CARDINALS = ("front", "behind", "left", "right", "above", "below")
OPPOSITE = {"front": "behind", "behind": "front", "left": "right", "right": "left",
            "above": "below", "below": "above"}
DIAGONALS = (
    ("front", "left"), ("front", "right"), ("front", "above"), ("front", "below"),
    ("behind", "left"), ("behind", "right"), ("behind", "above"), ("behind", "below"),
    ("left", "above"), ("left", "below"), ("right", "above"), ("right", "below"),
)
WORLD_UP = (0.0, 1.0, 0.0)
VERTICAL_LIMIT = 0.99


@dataclass(frozen=True)
class DirectionSet:
    labels: Tuple[str, ...]
    vectors: np.ndarray  # (18, 3)
    degenerate: bool = False

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self.labels

    def __getitem__(self, label: str) -> np.ndarray:
        try:
            return self.vectors[self.labels.index(label)]
        except ValueError:
            raise KeyError(f"unknown direction '{label}'") from None

    def as_dict(self) -> Dict[str, List[float]]:
        return {lab: v.tolist() for lab, v in zip(self.labels, self.vectors)}

    @staticmethod
    def parents(label: str) -> Tuple[str, ...]:
        return tuple(label.split("-"))


def _frame(front, up):
    if abs(front @ up) <= VERTICAL_LIMIT:
        return front, up, False
    above = up - (up @ front) * front
    if np.linalg.norm(above) < 0.1:
        above = np.array([1.0, 0.0, 0.0])
        above = above - (above @ front) * front
    return front, normalize(above), True


def build_direction_set(camera_center, center, world_up=WORLD_UP, strict: bool = False) -> DirectionSet:
    """Six cardinals anchored on the camera plus their twelve pairwise diagonals.

    ``front`` points from ``center`` to the camera, ``above`` is world up and
    ``right = front x above``. For near-vertical views (|front . up| > 0.99)
    ``above`` is re-orthogonalised against ``front``; ``strict`` raises
    DegenerateFrame instead.
    """
    cam, c = np.asarray(camera_center, dtype=float), np.asarray(center, dtype=float)
    if np.linalg.norm(cam - c) < 1e-12:
        raise DegenerateFrame("camera centre coincides with the object centre")
    front = normalize(cam - c)
    up = normalize(np.asarray(world_up, dtype=float))
    front, above, degenerate = _frame(front, up)
    if degenerate and strict:
        raise DegenerateFrame("camera looks along the vertical axis")
    right = normalize(np.cross(front, above))
    card = {"front": front, "behind": -front, "above": above, "below": -above, "right": right, "left": -right}
    labels = list(CARDINALS)
    vecs = [card[k] for k in CARDINALS]
    for a, b in DIAGONALS:
        labels.append(f"{a}-{b}")
        vecs.append(normalize(card[a] + card[b]))
    return DirectionSet(tuple(labels), np.array(vecs), degenerate)


def optimal_palm_direction(direction) -> np.ndarray:
    """The palm faces back along the approach direction."""
    return -np.asarray(direction, dtype=float)


def initial_position(center, direction, hull: ConvexHull) -> np.ndarray:
    """Exit point of the ray from ``center`` along ``direction`` on the (expanded) hull."""
    return ray_hull_intersect(Ray(center, direction), hull)


def align_rotation(a, b, fallback_axis) -> Rotation:
    """Smallest rotation taking unit ``a`` onto unit ``b``; pi about ``fallback_axis`` when antiparallel."""
    a, b = normalize(np.asarray(a, dtype=float)), normalize(np.asarray(b, dtype=float))
    axis = np.cross(a, b)
    s, c = np.linalg.norm(axis), float(a @ b)
    if s < 1e-12:
        if c > 0:
            return Rotation.identity()
        return Rotation.from_rotvec(np.pi * normalize(np.asarray(fallback_axis, dtype=float)))
    return Rotation.from_rotvec(axis / s * np.arctan2(s, c))


def generate_rotation_candidates(kin: HandKinematics, theta0, translation, palm_direction, k: int = 4):
    """``k`` poses whose palm normal equals ``palm_direction``, spun by 2 pi j / k about it."""
    if k < 1:
        raise ValueError("need at least one rotation candidate")
    d = normalize(np.asarray(palm_direction, dtype=float))
    base = align_rotation(kin.palm_normal, d, kin.finger_axis)
    out = []
    for j in range(k):
        R = Rotation.from_rotvec(d * (2.0 * np.pi * j / k)) * base
        out.append(GraspPose(np.asarray(translation, dtype=float), R.as_quat(), np.asarray(theta0, dtype=float)))
    return out


def spin_angles(k: int) -> np.ndarray:
    return 360.0 * np.arange(k) / k
