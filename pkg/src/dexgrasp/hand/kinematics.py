"""Capsule hand: kinematic tree, forward kinematics and pose derivatives.

Hand-local frame: palm centroid at the origin, fingers extend along +y, the
inward palm normal is +z and the thumb sits on the +x side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import InvalidPose

N_JOINTS = 16
N_PARAMS = 22  # 3 translation + 3 rotation increment + 16 joints
FINGERS = ("thumb", "index", "middle", "ring", "little")
FUNCTIONAL_FINGERS = ("thumb", "index")


@dataclass(frozen=True)
class Capsule:
    p0: Tuple[float, float, float]
    p1: Tuple[float, float, float]
    radius: float


@dataclass(frozen=True, eq=False)
class Link:
    name: str
    parent: int
    finger: str
    offset_rotation: np.ndarray  # 3x3, parent frame -> link frame at rest
    offset_translation: np.ndarray  # link origin in parent frame
    joint_axis: Optional[np.ndarray] = None  # revolute axis in the link frame
    limits: Optional[Tuple[float, float]] = None
    capsules: Tuple[Capsule, ...] = ()


@dataclass(frozen=True, eq=False)
class HandKinematics:
    links: Tuple[Link, ...]
    palm_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    finger_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        roots = [i for i, l in enumerate(self.links) if l.parent < 0]
        if roots != [0]:
            raise ValueError("link 0 must be the single root")
        for i, l in enumerate(self.links):
            if i and not 0 <= l.parent < i:
                raise ValueError("links must be topologically ordered (parent before child)")
        if len(self.joint_links) != N_JOINTS:
            raise ValueError(f"expected {N_JOINTS} revolute joints, got {len(self.joint_links)}")
        lo, hi = self.limits.T
        if np.any(lo >= hi):
            raise ValueError("every joint needs theta_min < theta_max")

    @cached_property
    def joint_links(self) -> np.ndarray:
        return np.array([i for i, l in enumerate(self.links) if l.joint_axis is not None])

    @cached_property
    def link_joint(self) -> np.ndarray:
        """Joint index per link, -1 for fixed links."""
        out = -np.ones(len(self.links), dtype=int)
        out[self.joint_links] = np.arange(N_JOINTS)
        return out

    @cached_property
    def limits(self) -> np.ndarray:
        return np.array([self.links[i].limits for i in self.joint_links], dtype=float)

    @cached_property
    def descendants(self) -> np.ndarray:
        """``D[a, b]`` is True when link ``b`` is ``a`` or lies below it."""
        n = len(self.links)
        D = np.eye(n, dtype=bool)
        for i in range(n - 1, 0, -1):
            D[self.links[i].parent] |= D[i]
        return D

    @cached_property
    def joint_fingers(self) -> List[str]:
        return [self.links[i].finger for i in self.joint_links]

    @cached_property
    def geometric_parent(self) -> np.ndarray:
        """Nearest ancestor that carries geometry (skips bare joint links)."""
        out = -np.ones(len(self.links), dtype=int)
        for i, l in enumerate(self.links):
            p = l.parent
            while p >= 0 and not self.links[p].capsules:
                p = self.links[p].parent
            out[i] = p
        return out

    @cached_property
    def non_adjacent_pairs(self) -> List[Tuple[int, int]]:
        geo = [i for i, l in enumerate(self.links) if l.capsules]
        gp = self.geometric_parent
        pairs = []
        for ai, a in enumerate(geo):
            for b in geo[ai + 1:]:
                if gp[a] == b or gp[b] == a:
                    continue
                pairs.append((a, b))
        return pairs

    @cached_property
    def capsule_links(self) -> np.ndarray:
        """Owning link of every capsule, in link order."""
        return np.array([i for i, l in enumerate(self.links) for _ in l.capsules], dtype=int)

    @cached_property
    def capsule_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """Capsule index pairs belonging to non-adjacent links."""
        pairs = set(self.non_adjacent_pairs)
        lid = self.capsule_links
        ia, ib = [], []
        for i in range(len(lid)):
            for j in range(i + 1, len(lid)):
                if (lid[i], lid[j]) in pairs or (lid[j], lid[i]) in pairs:
                    ia.append(i)
                    ib.append(j)
        return np.array(ia, dtype=int), np.array(ib, dtype=int)

    def clamp(self, theta) -> np.ndarray:
        return clamp_to_limits(self, theta)

    # ------------------------------------------------------------ persistence
    def to_dict(self) -> dict:
        links = []
        for l in self.links:
            links.append({
                "name": l.name, "parent": l.parent, "finger": l.finger,
                "offset_rotation": np.asarray(l.offset_rotation).tolist(),
                "offset_translation": np.asarray(l.offset_translation).tolist(),
                "joint_axis": None if l.joint_axis is None else np.asarray(l.joint_axis).tolist(),
                "limits": None if l.limits is None else list(l.limits),
                "capsules": [{"p0": list(c.p0), "p1": list(c.p1), "radius": c.radius} for c in l.capsules],
            })
        return {"links": links, "palm_normal": self.palm_normal.tolist(),
                "finger_axis": self.finger_axis.tolist()}

    @classmethod
    def from_dict(cls, d) -> "HandKinematics":
        links = []
        for l in d["links"]:
            links.append(Link(
                l["name"], int(l["parent"]), l["finger"],
                np.array(l["offset_rotation"], dtype=float),
                np.array(l["offset_translation"], dtype=float),
                None if l["joint_axis"] is None else np.array(l["joint_axis"], dtype=float),
                None if l["limits"] is None else tuple(float(x) for x in l["limits"]),
                tuple(Capsule(tuple(c["p0"]), tuple(c["p1"]), float(c["radius"])) for c in l["capsules"]),
            ))
        return cls(tuple(links), np.array(d["palm_normal"], dtype=float),
                   np.array(d["finger_axis"], dtype=float))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "HandKinematics":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def clamp_to_limits(kin: HandKinematics, theta) -> np.ndarray:
    lo, hi = kin.limits.T
    return np.clip(np.asarray(theta, dtype=float), lo, hi)


# ---------------------------------------------------------------- pose


@dataclass(frozen=True)
class GraspPose:
    """Hand state: translation (m), unit quaternion (x, y, z, w) and 16 joint angles (rad)."""

    translation: np.ndarray
    quaternion: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        th = np.asarray(self.theta, dtype=float).reshape(N_JOINTS)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(q)) and np.all(np.isfinite(th))):
            raise InvalidPose("pose contains non-finite values")
        n = np.linalg.norm(q)
        if n < 1e-12:
            raise InvalidPose("zero quaternion")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", q / n)
        object.__setattr__(self, "theta", th)

    @classmethod
    def identity(cls, theta=None) -> "GraspPose":
        return cls(np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]),
                   np.zeros(N_JOINTS) if theta is None else theta)

    @classmethod
    def from_matrix(cls, translation, rotation, theta) -> "GraspPose":
        return cls(translation, Rotation.from_matrix(rotation).as_quat(), theta)

    @property
    def rotation(self) -> np.ndarray:
        return Rotation.from_quat(self.quaternion).as_matrix()

    def step(self, delta) -> "GraspPose":
        """Apply a 22-vector increment; rotation composes ``exp(dw) @ R`` (world frame)."""
        delta = np.asarray(delta, dtype=float)
        q = (Rotation.from_rotvec(delta[3:6]) * Rotation.from_quat(self.quaternion)).as_quat()
        return GraspPose(self.translation + delta[:3], q, self.theta + delta[6:])

    def with_theta(self, theta) -> "GraspPose":
        return GraspPose(self.translation, self.quaternion, theta)

    def to_dict(self) -> dict:
        return {"translation": self.translation.tolist(), "quaternion_xyzw": self.quaternion.tolist(),
                "theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, d) -> "GraspPose":
        return cls(d["translation"], d["quaternion_xyzw"], d["theta"])


def axis_rotation(axis, angle) -> np.ndarray:
    return Rotation.from_rotvec(np.asarray(axis, dtype=float) * angle).as_matrix()


@dataclass(frozen=True)
class LinkFrames:
    """World-frame link rotations and origins for one pose."""

    rotations: np.ndarray  # (L, 3, 3)
    origins: np.ndarray  # (L, 3)
    base_rotation: np.ndarray
    translation: np.ndarray

    def joint_axes(self, kin: HandKinematics) -> np.ndarray:
        jl = kin.joint_links
        axes = np.stack([kin.links[i].joint_axis for i in jl])
        return np.einsum("jab,jb->ja", self.rotations[jl], axes)

    def joint_pivots(self, kin: HandKinematics) -> np.ndarray:
        return self.origins[kin.joint_links]


def link_frames(kin: HandKinematics, pose: GraspPose) -> LinkFrames:
    """Compose rigid link transforms root to leaf."""
    n = len(kin.links)
    R_base = pose.rotation
    rots = np.empty((n, 3, 3))
    orig = np.empty((n, 3))
    lj = kin.link_joint
    for i, l in enumerate(kin.links):
        if l.parent < 0:
            R_par, o_par = R_base, pose.translation
        else:
            R_par, o_par = rots[l.parent], orig[l.parent]
        R = R_par @ l.offset_rotation
        if l.joint_axis is not None:
            R = R @ axis_rotation(l.joint_axis, pose.theta[lj[i]])
        rots[i] = R
        orig[i] = o_par + R_par @ l.offset_translation
    return LinkFrames(rots, orig, R_base, pose.translation)


def transform_points(frames: LinkFrames, link_ids, local) -> np.ndarray:
    return np.einsum("nab,nb->na", frames.rotations[link_ids], local) + frames.origins[link_ids]


def accumulate_gradient(kin: HandKinematics, frames: LinkFrames, link_ids, points, grads) -> np.ndarray:
    """Chain dE/dp for world points rigidly attached to links into the 22 pose parameters.

    Uses J^T g without building the Jacobian: translation rows are the identity,
    the rotation increment gives ``(p - T) x g`` and joint k gives
    ``a_k . sum over descendants of (p - pivot_k) x g``.
    """
    g = np.asarray(grads, dtype=float).reshape(-1, 3)
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.zeros(N_PARAMS)
    if len(g) == 0:
        return out
    out[:3] = g.sum(axis=0)
    out[3:6] = np.cross(p - frames.translation, g).sum(axis=0)
    n_links = len(kin.links)
    S0 = np.zeros((n_links, 3))
    S1 = np.zeros((n_links, 3))
    np.add.at(S0, link_ids, g)
    np.add.at(S1, link_ids, np.cross(p, g))
    jl = kin.joint_links
    D = kin.descendants[jl].astype(float)  # (16, L)
    sub0, sub1 = D @ S0, D @ S1
    pivots = frames.joint_pivots(kin)
    axes = frames.joint_axes(kin)
    out[6:] = np.einsum("ja,ja->j", axes, sub1 - np.cross(pivots, sub0))
    return out


def point_jacobian(kin: HandKinematics, frames: LinkFrames, link_ids, points) -> np.ndarray:
    """Explicit (N, 3, 22) Jacobian of attached world points."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(p)
    J = np.zeros((n, 3, N_PARAMS))
    J[:, :, :3] = np.eye(3)
    r = p - frames.translation
    # d(exp(w) r)/dw at 0 = -[r]_x
    J[:, 0, 4], J[:, 0, 5] = r[:, 2], -r[:, 1]
    J[:, 1, 3], J[:, 1, 5] = -r[:, 2], r[:, 0]
    J[:, 2, 3], J[:, 2, 4] = r[:, 1], -r[:, 0]
    axes, pivots = frames.joint_axes(kin), frames.joint_pivots(kin)
    D = kin.descendants[kin.joint_links]
    for k in range(N_JOINTS):
        mask = D[k][link_ids]
        if mask.any():
            J[mask, :, 6 + k] = np.cross(axes[k], p[mask] - pivots[k])
    return J
