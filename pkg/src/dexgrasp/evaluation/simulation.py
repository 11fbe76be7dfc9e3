"""Quasi-static hold test: a rigid object under gravity against fixed penalty contacts."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from ..errors import SimulationDiverged
from ..geometry.cloud import OrientedPointCloud
from ..geometry.mesh import TriMesh
from .metrics import SUCCESS_DEPTH_CM

GRAVITY = 9.81


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 240.0
    steps: int = 480
    stiffness: float = 5000.0  # N/m per contact
    friction: float = 0.8
    tangential_damping: float = 50.0  # N s/m per contact, capped by the Coulomb limit
    normal_damping: float = 5.0  # N s/m per contact
    mass: float = 0.3  # kg
    gravity: bool = True
    settle_time: float = 0.1  # s before contacts must be continuous

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimResult:
    displacement_cm: float
    contacts: List[int] = field(default_factory=list)  # active contacts per step
    final_com: np.ndarray = None
    stiffness_scale: List[float] = field(default_factory=list)


def mass_properties(mesh: TriMesh, mass: float):
    """(centre of mass, inertia about it) of a closed mesh scaled to ``mass``."""
    tri = mesh.triangles
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    vol6 = np.einsum("ij,ij->i", a, np.cross(b, c))
    volume = vol6.sum() / 6.0
    if not abs(volume) > 1e-15:
        # open or flat mesh: fall back to a point cloud of vertices
        com = mesh.vertices.mean(axis=0)
        r = mesh.vertices - com
        inertia = mass * (np.eye(3) * (r * r).sum(1).mean() - (r.T @ r) / len(r))
        return com, inertia + np.eye(3) * 1e-12
    com = ((a + b + c) * vol6[:, None]).sum(axis=0) / (4.0 * vol6.sum())
    # second moments of each signed tetrahedron (origin, a, b, c), shifted to the mesh origin
    s = a + b + c
    outer = sum(np.einsum("ni,nj->nij", p, p) for p in (a, b, c, s))
    cov = np.einsum("n,nij->ij", vol6 / 120.0, outer)
    density = mass / volume
    cov = density * cov - mass * np.outer(com, com)
    inertia = np.eye(3) * np.trace(cov) - cov
    return com, inertia


def simulate_displacement(hand_points, obj_mesh: TriMesh, obj: OrientedPointCloud,
                          cfg: SimConfig = SimConfig()) -> SimResult:
    """Integrate the object with semi-implicit Euler and return its centre-of-mass travel.

    Each fixed hand point pushes on the object with a one-sided spring along
    the nearest surface normal, plus tangential damping capped by Coulomb
    friction. When the summed contact stiffness would make the explicit
    spring update unstable at ``dt``, all contact forces of that step are
    scaled down to the stability limit (recorded in ``stiffness_scale``).
    """
    hand = np.asarray(hand_points, dtype=float).reshape(-1, 3)
    com0, inertia_body = mass_properties(obj_mesh, cfg.mass)
    inv_inertia_body = np.linalg.inv(inertia_body)
    local_pts = obj.points - com0
    local_nrm = obj.normals
    tree = cKDTree(local_pts)
    x, v, w = com0.copy(), np.zeros(3), np.zeros(3)
    R = np.eye(3)
    g = np.array([0.0, -GRAVITY, 0.0]) if cfg.gravity else np.zeros(3)
    dt, m, k = cfg.dt, cfg.mass, cfg.stiffness
    k_lin_max = 0.5 * 4.0 * m / dt ** 2  # half the explicit stability bound
    i_min = float(np.linalg.eigvalsh(inertia_body).min())
    k_ang_max = 0.5 * 4.0 * i_min / dt ** 2
    contacts, scales = [], []
    for _ in range(cfg.steps):
        force, torque = m * g, np.zeros(3)
        n_active, scale = 0, 1.0
        if len(hand):
            q = (hand - x) @ R  # body frame
            _, idx = tree.query(q)
            n_b = local_nrm[idx]
            s = np.einsum("ij,ij->i", local_pts[idx] - q, n_b)
            act = s > 0
            n_active = int(act.sum())
            if n_active:
                n_w = n_b[act] @ R.T
                r = hand[act] - x
                depth = s[act]
                lever = np.linalg.norm(np.cross(r, n_w), axis=1)
                scale = min(1.0, k_lin_max / (k * n_active),
                            k_ang_max / max(k * float(np.sum(lever ** 2)), 1e-300))
                vel = v + np.cross(w, r)
                vn = np.einsum("ij,ij->i", vel, n_w)  # rate of change of the depth
                cap_damp = m / (dt * n_active)  # keeps the summed damping from reversing motion
                fn_mag = np.maximum(k * depth + min(cfg.normal_damping, cap_damp) * vn, 0.0)
                # the object is pushed so the hand point leaves through the nearest surface
                f_n = -fn_mag[:, None] * n_w
                vt = vel - vn[:, None] * n_w
                vt_norm = np.linalg.norm(vt, axis=1)
                ft_mag = np.minimum(min(cfg.tangential_damping, cap_damp) * vt_norm, cfg.friction * fn_mag)
                f_t = -(ft_mag / np.where(vt_norm > 1e-12, vt_norm, 1.0))[:, None] * vt
                f = scale * (f_n + f_t)
                force = force + f.sum(axis=0)
                torque = torque + np.cross(r, f).sum(axis=0)
        contacts.append(n_active)
        scales.append(scale)
        inv_i = R @ inv_inertia_body @ R.T
        i_w = R @ inertia_body @ R.T
        v = v + dt * force / m
        w = w + dt * (inv_i @ (torque - np.cross(w, i_w @ w)))
        x = x + dt * v
        R = Rotation.from_rotvec(dt * w).as_matrix() @ R
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise SimulationDiverged("object state became non-finite")
    return SimResult(100.0 * float(np.linalg.norm(x - com0)), contacts, x, scales)


def simulation_success(result: SimResult, p_dep_cm: float, cfg: SimConfig = SimConfig()) -> bool:
    """Contact held at every step after the settle time and penetration under 1 cm."""
    first = int(np.floor(cfg.settle_time / cfg.dt))
    held = all(c >= 1 for c in result.contacts[first:]) and len(result.contacts) > first
    return bool(held and p_dep_cm < SUCCESS_DEPTH_CM)
