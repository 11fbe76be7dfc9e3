"""Contact-guided refinement energies.

Every term returns ``(value, gradient)``. Vertex-based terms give the
gradient with respect to hand vertex positions (N, 3); :func:`total_energy`
chains them through the kinematic tree into the 22 pose parameters.
Nearest-neighbour assignments are held fixed inside a gradient evaluation,
which makes every term differentiable almost everywhere.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from ..errors import EmptyContactTarget
from ..geometry.cloud import OrientedPointCloud, nearest_points
from ..hand.kinematics import N_PARAMS, GraspPose, HandKinematics, accumulate_gradient
from ..hand.model import (
    HandSurface,
    capsule_segments,
    contact_probability,
    forward_kinematics,
    surface_gradient,
)

TERMS = ("cont_fun", "cont_unf", "cmap", "pen", "spen", "fc", "pip")
FC_CONTACT_PROB = 0.5
FC_CONTACT_DEPTH = 0.005


@dataclass(frozen=True)
class EnergyWeights:
    cont_fun: float = 60.0
    cont_unf: float = 30.0
    cmap: float = 50.0
    pen: float = 20.0
    spen: float = 1.0
    fc: float = 1.0
    pip: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"weight {k} must be non-negative")

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def zeros(cls) -> "EnergyWeights":
        return cls(*([0.0] * len(TERMS)))


@dataclass
class EnergyBreakdown:
    terms: Dict[str, float]
    weights: Dict[str, float]
    total: float
    gradient: np.ndarray
    signature: Tuple = field(default=(), repr=False)

    @property
    def weighted(self) -> Dict[str, float]:
        return {k: self.weights[k] * v for k, v in self.terms.items()}

    def to_dict(self) -> dict:
        return {"terms": dict(self.terms), "weights": dict(self.weights), "total": self.total,
                "gradient": self.gradient.tolist()}


@dataclass(frozen=True)
class ContactTargets:
    """Refinement targets drawn from the object cloud."""

    functional: OrientedPointCloud  # P_func (or M_func when no point-level contacts)
    hand: OrientedPointCloud  # M_hand

    @classmethod
    def from_indices(cls, cloud: OrientedPointCloud, func_idx, hand_idx) -> "ContactTargets":
        return cls(cloud.subset(np.asarray(func_idx, dtype=np.int64)),
                   cloud.subset(np.asarray(hand_idx, dtype=np.int64)))


# ---------------------------------------------------------------- contact terms


def _weighted_min_distance(verts, weights, targets: OrientedPointCloud, nn=None):
    if len(targets) == 0:
        raise EmptyContactTarget("contact target set is empty")
    n = len(verts)
    if n == 0:
        return 0.0, np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    idx, d = nearest_points(targets, verts) if nn is None else nn
    value = float(np.dot(weights, d) / n)
    diff = verts - targets.points[idx]
    safe = np.where(d > 0, d, 1.0)
    grad = (weights / n / safe)[:, None] * diff
    grad[d == 0] = 0.0
    return value, grad, idx


def e_cont_fun(surface: HandSurface, cmap, func_points: OrientedPointCloud, nn=None):
    """Mean over functional vertices of C_j times the distance to the nearest functional contact."""
    m = surface.functional
    v, g, _ = _weighted_min_distance(surface.vertices[m], np.asarray(cmap)[m], func_points, nn)
    grad = np.zeros_like(surface.vertices)
    grad[m] = g
    return v, grad


def e_cont_unf(surface: HandSurface, cmap, hand_points: OrientedPointCloud, nn=None):
    """Same form over the remaining vertices against the whole-hand contact region."""
    m = ~surface.functional
    v, g, _ = _weighted_min_distance(surface.vertices[m], np.asarray(cmap)[m], hand_points, nn)
    grad = np.zeros_like(surface.vertices)
    grad[m] = g
    return v, grad


def e_cmap_hand(surface: HandSurface, hand_points: OrientedPointCloud, nn=None):
    """Mean distance from each contact-region point to its nearest hand vertex."""
    if len(hand_points) == 0:
        return 0.0, np.zeros_like(surface.vertices)
    d, idx = cKDTree(surface.vertices).query(hand_points.points) if nn is None else nn
    value = float(d.mean())
    diff = surface.vertices[idx] - hand_points.points
    safe = np.where(d > 0, d, 1.0)
    contrib = diff / safe[:, None] / len(hand_points)
    contrib[d == 0] = 0.0
    grad = np.zeros_like(surface.vertices)
    np.add.at(grad, idx, contrib)
    return value, grad


def e_pen(surface: HandSurface, obj: OrientedPointCloud, nn=None):
    """Sum of squared positive penetration depths (m^2)."""
    idx, _ = nearest_points(obj, surface.vertices) if nn is None else nn
    n = obj.normals[idx]
    s = np.einsum("ij,ij->i", obj.points[idx] - surface.vertices, n)
    inside = np.maximum(s, 0.0)
    value = float(np.sum(inside ** 2))
    grad = (-2.0 * inside)[:, None] * n
    return value, grad


def e_fc(surface: HandSurface, cmap, obj: OrientedPointCloud, nn=None):
    """Normalised residual of inward contact normals; 1 when nothing touches.

    The contact set and normals are piecewise constant in the vertex
    positions, so the gradient is zero almost everywhere.
    """
    idx, _ = nearest_points(obj, surface.vertices) if nn is None else nn
    n = obj.normals[idx]
    s = np.einsum("ij,ij->i", obj.points[idx] - surface.vertices, n)
    contact = (np.asarray(cmap) >= FC_CONTACT_PROB) & (np.abs(s) <= FC_CONTACT_DEPTH)
    count = int(contact.sum())
    grad = np.zeros_like(surface.vertices)
    if count == 0:
        return 1.0, grad
    value = float(np.linalg.norm((-n[contact]).sum(axis=0)) / max(1, count))
    return value, grad


def e_pip(theta, limits):
    theta = np.asarray(theta, dtype=float)
    lo, hi = np.asarray(limits, dtype=float).T
    over = np.maximum(theta - hi, 0.0)
    under = np.maximum(lo - theta, 0.0)
    return float(np.sum(over ** 2 + under ** 2)), 2.0 * over - 2.0 * under


# ---------------------------------------------------------------- self penetration


def segment_closest(p0, p1, q0, q1, eps=1e-12):
    """Closest-point parameters between segment batches (Ericson, clamped)."""
    d1, d2 = p1 - p0, q1 - q0
    r = p0 - q0
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b
    s = np.where(denom > eps, np.clip((b * f - c * e) / np.where(denom > eps, denom, 1.0), 0.0, 1.0), 0.0)
    t = (b * s + f) / np.maximum(e, eps)
    low, high = t < 0.0, t > 1.0
    t = np.clip(t, 0.0, 1.0)
    s = np.where(low, np.clip(-c / np.maximum(a, eps), 0.0, 1.0), s)
    s = np.where(high, np.clip((b - c) / np.maximum(a, eps), 0.0, 1.0), s)
    return s, t


def capsule_pair_overlaps(kin: HandKinematics, frames):
    """Overlap depth r_a + r_b - axis distance for every non-adjacent capsule pair."""
    seg, rad, lid = capsule_segments(kin, frames)
    ia, ib = kin.capsule_pairs
    p0, p1, q0, q1 = seg[ia, 0], seg[ia, 1], seg[ib, 0], seg[ib, 1]
    s, t = segment_closest(p0, p1, q0, q1)
    c1 = p0 + s[:, None] * (p1 - p0)
    c2 = q0 + t[:, None] * (q1 - q0)
    diff = c1 - c2
    dist = np.linalg.norm(diff, axis=1)
    return rad[ia] + rad[ib] - dist, (ia, ib, s, t, diff, dist, seg, lid)


def e_spen(kin: HandKinematics, frames):
    """Sum over non-adjacent capsule pairs of squared axis-distance overlap.

    Returns the value and its gradient over the 22 pose parameters.
    """
    overlap, (ia, ib, s, t, diff, dist, seg, lid) = capsule_pair_overlaps(kin, frames)
    hit = np.maximum(overlap, 0.0)
    value = float(np.sum(hit ** 2))
    grad = np.zeros(N_PARAMS)
    act = np.flatnonzero(hit > 0)
    if len(act) == 0:
        return value, grad
    u = diff[act] / np.maximum(dist[act], 1e-12)[:, None]
    dE = (-2.0 * hit[act])[:, None] * u  # dE/dc1; dE/dc2 = -dE/dc1
    sa, ta = s[act][:, None], t[act][:, None]
    pts = np.concatenate([seg[ia[act], 0], seg[ia[act], 1], seg[ib[act], 0], seg[ib[act], 1]])
    grads = np.concatenate([(1 - sa) * dE, sa * dE, -(1 - ta) * dE, -ta * dE])
    links = np.concatenate([lid[ia[act]], lid[ia[act]], lid[ib[act]], lid[ib[act]]])
    return value, accumulate_gradient(kin, frames, links, pts, grads)


# ---------------------------------------------------------------- total


def total_energy(kin: HandKinematics, pose: GraspPose, targets: ContactTargets, obj: OrientedPointCloud,
                 weights: EnergyWeights = EnergyWeights(), contact_map=None, sigma: float = 0.02,
                 surface: Optional[HandSurface] = None) -> EnergyBreakdown:
    """Weighted energy sum and its gradient over (T, rotation increment, theta).

    ``contact_map`` defaults to the distance-based map at the current pose and
    is treated as a constant weight (no gradient flows through it).
    """
    surf = surface if surface is not None else forward_kinematics(kin, pose)
    cmap = contact_probability(surf, obj, sigma) if contact_map is None else np.asarray(contact_map)
    w = weights.as_dict()
    terms: Dict[str, float] = {}
    vgrad = np.zeros_like(surf.vertices)
    grad = np.zeros(N_PARAMS)

    verts = surf.vertices
    nn_fun = nearest_points(targets.functional, verts[surf.functional]) if len(targets.functional) else None
    nn_unf = nearest_points(targets.hand, verts[~surf.functional]) if len(targets.hand) else None
    nn_cmap = cKDTree(verts).query(targets.hand.points) if len(targets.hand) else None
    nn_obj = nearest_points(obj, verts)

    v, g = e_cont_fun(surf, cmap, targets.functional, nn_fun)
    terms["cont_fun"] = v
    vgrad += w["cont_fun"] * g
    v, g = e_cont_unf(surf, cmap, targets.hand, nn_unf)
    terms["cont_unf"] = v
    vgrad += w["cont_unf"] * g
    v, g = e_cmap_hand(surf, targets.hand, nn_cmap)
    terms["cmap"] = v
    vgrad += w["cmap"] * g
    v, g = e_pen(surf, obj, nn_obj)
    terms["pen"] = v
    vgrad += w["pen"] * g
    v, g_pose = e_spen(kin, surf.frames)
    terms["spen"] = v
    grad += w["spen"] * g_pose
    v, _ = e_fc(surf, cmap, obj, nn_obj)
    terms["fc"] = v
    v, g_theta = e_pip(pose.theta, kin.limits)
    terms["pip"] = v
    grad[6:] += w["pip"] * g_theta

    grad += surface_gradient(kin, surf, vgrad)
    total = float(sum(w[k] * terms[k] for k in TERMS))
    sig = _signature(surf, cmap, obj, nn_fun, nn_unf, nn_cmap, nn_obj)
    return EnergyBreakdown(terms, w, total, grad, sig)


def _signature(surf, cmap, obj, nn_fun, nn_unf, nn_cmap, nn_obj):
    """Discrete state (nearest assignments, contact membership) used to detect switch points."""
    oi = nn_obj[0]
    n = obj.normals[oi]
    s = np.einsum("ij,ij->i", obj.points[oi] - surf.vertices, n)
    fc = (np.asarray(cmap) >= FC_CONTACT_PROB) & (np.abs(s) <= FC_CONTACT_DEPTH)
    parts = [None if nn is None else np.asarray(nn[k]).tobytes()
             for nn, k in ((nn_fun, 0), (nn_unf, 0), (nn_cmap, 1))]
    return tuple(parts) + (oi.tobytes(), fc.tobytes())
