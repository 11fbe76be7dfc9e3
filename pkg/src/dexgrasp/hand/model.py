"""Default capsule hand, surface sampling and forward kinematics outputs."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

from ..errors import EmptyCloud, InvalidPose
from ..geometry.cloud import OrientedPointCloud, nearest_points
from ..geometry.mesh import TriMesh, concatenate, normalize
from .kinematics import (
    FUNCTIONAL_FINGERS,
    Capsule,
    GraspPose,
    HandKinematics,
    Link,
    LinkFrames,
    accumulate_gradient,
    axis_rotation,
    link_frames,
    point_jacobian,
    transform_points,
)

X = np.array([1.0, 0.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])

# (name, mcp x, mcp y, segment lengths, radii) in metres
_FINGER_TABLE = (
    ("index", 0.0285, 0.040, (0.040, 0.025, 0.021), (0.0085, 0.0080, 0.0074)),
    ("middle", 0.0095, 0.042, (0.045, 0.028, 0.022), (0.0085, 0.0080, 0.0074)),
    ("ring", -0.0095, 0.040, (0.042, 0.027, 0.021), (0.0080, 0.0075, 0.0070)),
    ("little", -0.0285, 0.036, (0.033, 0.021, 0.020), (0.0075, 0.0070, 0.0065)),
)
_FINGER_LIMITS = ((-0.35, 1.60), (0.0, 1.75), (0.0, 1.40))

_THUMB_BASE = (0.030, -0.030, -0.002)
_THUMB_YAW = -0.75  # rest rotation about the palm normal, fans the thumb toward +x
_THUMB_LENGTHS = (0.040, 0.032, 0.026)
_THUMB_RADII = (0.0110, 0.0095, 0.0085)
_THUMB_LIMITS = ((-0.40, 1.00), (-0.30, 1.20), (-0.30, 1.10), (-0.30, 1.40))

_PALM_RADIUS = 0.0125
_PALM_XS = (-0.0275, -0.00917, 0.00917, 0.0275)
_PALM_HALF_LEN = 0.0325


def build_default_hand() -> HandKinematics:
    """Palm 9 x 8 x 2.5 cm with 4 + 3 + 3 + 3 + 3 revolute joints."""
    I = np.eye(3)
    links = [Link("palm", -1, "palm", I, np.zeros(3), capsules=tuple(
        Capsule((x, -_PALM_HALF_LEN, 0.0), (x, _PALM_HALF_LEN, 0.0), _PALM_RADIUS) for x in _PALM_XS))]

    # thumb: bare abduction link (axis = palm normal) then three flexing segments
    links.append(Link("thumb_base", 0, "thumb", axis_rotation(Z, _THUMB_YAW),
                      np.array(_THUMB_BASE), Z.copy(), _THUMB_LIMITS[0]))
    parent, offset = len(links) - 1, np.zeros(3)
    for k, (name, L, r) in enumerate(zip(("metacarpal", "proximal", "distal"), _THUMB_LENGTHS, _THUMB_RADII)):
        links.append(Link(f"thumb_{name}", parent, "thumb", I, offset, X.copy(), _THUMB_LIMITS[k + 1],
                          (Capsule((0.0, 0.0, 0.0), (0.0, L, 0.0), r),)))
        parent, offset = len(links) - 1, np.array([0.0, L, 0.0])

    for finger, x, y, lengths, radii in _FINGER_TABLE:
        parent, offset = 0, np.array([x, y, 0.0])
        for k, (name, L, r) in enumerate(zip(("proximal", "middle", "distal"), lengths, radii)):
            links.append(Link(f"{finger}_{name}", parent, finger, I, offset, X.copy(), _FINGER_LIMITS[k],
                              (Capsule((0.0, 0.0, 0.0), (0.0, L, 0.0), r),)))
            parent, offset = len(links) - 1, np.array([0.0, L, 0.0])
    return HandKinematics(tuple(links))


@lru_cache(maxsize=1)
def default_hand() -> HandKinematics:
    return build_default_hand()


# ---------------------------------------------------------------- surface


def _capsule_samples(c: Capsule, n_around=8, ring_spacing=0.012, cap_rings=1, base_cap=True):
    p0, p1 = np.asarray(c.p0, dtype=float), np.asarray(c.p1, dtype=float)
    axis = p1 - p0
    L = np.linalg.norm(axis)
    a = axis / L
    ref = X if abs(a @ X) < 0.9 else Z
    u = normalize(np.cross(a, ref))
    w = np.cross(a, u)
    ang = 2.0 * np.pi * np.arange(n_around) / n_around
    radial = np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * w
    pts, nrm = [], []
    n_rings = max(2, int(np.ceil(L / ring_spacing)) + 1)
    for t in np.linspace(0.0, 1.0, n_rings):
        pts.append(p0 + t * axis + c.radius * radial)
        nrm.append(radial)
    ends = ((p0, -1.0), (p1, 1.0)) if base_cap else ((p1, 1.0),)
    for end, sign in ends:
        for k in range(1, cap_rings + 1):
            phi = 0.5 * np.pi * k / (cap_rings + 1)
            d = np.cos(phi) * radial + sign * np.sin(phi) * a
            pts.append(end + c.radius * d)
            nrm.append(d)
        pts.append((end + sign * c.radius * a)[None])
        nrm.append((sign * a)[None])
    return np.concatenate(pts), np.concatenate(nrm)


@dataclass(frozen=True)
class SurfaceTemplate:
    """Link-frame surface samples; fixed for a given kinematics + sampling config."""

    local_points: np.ndarray
    local_normals: np.ndarray
    link_ids: np.ndarray
    finger_ids: np.ndarray  # index into FINGER_NAMES
    functional: np.ndarray
    palm_back: np.ndarray  # dorsal samples on palm and fingers
    finger_names: Tuple[str, ...]


def surface_template(kin: HandKinematics, n_around=8, ring_spacing=0.012) -> SurfaceTemplate:
    """Sample every capsule; the base cap of child links is buried in the parent and skipped."""
    pts, nrm, lids = [], [], []
    for li, link in enumerate(kin.links):
        link_pts, link_nrm = [], []
        for ci, cap in enumerate(link.capsules):
            p, n = _capsule_samples(cap, n_around, ring_spacing, base_cap=link.parent < 0)
            # drop samples buried inside sibling capsules of the same link
            keep = np.ones(len(p), dtype=bool)
            for cj, other in enumerate(link.capsules):
                if cj != ci:
                    keep &= _capsule_distance(p, other) > other.radius - 1e-9
            link_pts.append(p[keep])
            link_nrm.append(n[keep])
        if link_pts:
            p = np.concatenate(link_pts)
            pts.append(p)
            nrm.append(np.concatenate(link_nrm))
            lids.append(np.full(len(p), li))
    pts, nrm, lids = np.concatenate(pts), np.concatenate(nrm), np.concatenate(lids)

    names = ("palm",) + tuple(dict.fromkeys(l.finger for l in kin.links if l.finger != "palm"))
    fid = np.array([names.index(kin.links[i].finger) for i in lids])
    functional = np.zeros(len(lids), dtype=bool)
    for f in FUNCTIONAL_FINGERS:
        chain = [i for i, l in enumerate(kin.links) if l.finger == f and l.capsules]
        for li in chain[-2:]:
            functional |= lids == li
    # back of the hand: every link frame keeps the palmar side on +palm_normal at rest
    palm_back = nrm @ kin.palm_normal < -0.3
    return SurfaceTemplate(pts, nrm, lids, fid, functional, palm_back, names)


def _capsule_distance(p, cap: Capsule):
    a, b = np.asarray(cap.p0, dtype=float), np.asarray(cap.p1, dtype=float)
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


@lru_cache(maxsize=8)
def template_for(kin: HandKinematics) -> SurfaceTemplate:
    return surface_template(kin)


@dataclass(frozen=True)
class HandSurface:
    """World-frame hand samples for one pose."""

    vertices: np.ndarray
    normals: np.ndarray
    template: SurfaceTemplate
    frames: LinkFrames

    @property
    def link_ids(self):
        return self.template.link_ids

    @property
    def functional(self):
        return self.template.functional

    @property
    def palm_back(self):
        return self.template.palm_back

    @property
    def finger_vertices(self):
        return self.template.link_ids != 0

    def __len__(self):
        return len(self.vertices)


def forward_kinematics(kin: HandKinematics, pose: GraspPose, template: SurfaceTemplate = None) -> HandSurface:
    if not (np.all(np.isfinite(pose.translation)) and np.all(np.isfinite(pose.theta))):
        raise InvalidPose("pose contains non-finite values")
    tpl = template if template is not None else template_for(kin)
    frames = link_frames(kin, pose)
    verts = transform_points(frames, tpl.link_ids, tpl.local_points)
    nrm = np.einsum("nab,nb->na", frames.rotations[tpl.link_ids], tpl.local_normals)
    return HandSurface(verts, nrm, tpl, frames)


def fk_jacobian(kin: HandKinematics, pose: GraspPose, template: SurfaceTemplate = None) -> np.ndarray:
    """(N, 3, 22) derivatives of every surface vertex w.r.t. (T, rotation increment, theta)."""
    s = forward_kinematics(kin, pose, template)
    return point_jacobian(kin, s.frames, s.link_ids, s.vertices)


def surface_gradient(kin: HandKinematics, surface: HandSurface, grads) -> np.ndarray:
    return accumulate_gradient(kin, surface.frames, surface.link_ids, surface.vertices, grads)


def palm_and_finger_directions(kin: HandKinematics, pose: GraspPose):
    R = pose.rotation
    return R @ kin.palm_normal, R @ kin.finger_axis


def contact_probability(surface: HandSurface, obj: OrientedPointCloud, sigma: float = 0.02) -> np.ndarray:
    """Per-vertex weight ``exp(-d^2 / 2 sigma^2)``; zero on the back of the palm."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if len(obj) == 0:
        raise EmptyCloud("contact map needs a non-empty object cloud")
    _, d = nearest_points(obj, surface.vertices)
    c = np.exp(-(d ** 2) / (2.0 * sigma ** 2))
    c[surface.palm_back] = 0.0
    return c


# ---------------------------------------------------------------- capsules in world frame


def capsule_segments(kin: HandKinematics, frames: LinkFrames):
    """World endpoints (K, 2, 3), radii (K,) and owning link ids (K,)."""
    seg, rad, lid = [], [], []
    for li, link in enumerate(kin.links):
        R, o = frames.rotations[li], frames.origins[li]
        for c in link.capsules:
            seg.append([R @ np.asarray(c.p0) + o, R @ np.asarray(c.p1) + o])
            rad.append(c.radius)
            lid.append(li)
    return np.array(seg), np.array(rad), np.array(lid)


def capsule_mesh(p0, p1, radius, n_around=16, n_lat=4) -> TriMesh:
    """Closed triangle mesh of a capsule (cylinder plus two hemispheres)."""
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    axis = p1 - p0
    L = np.linalg.norm(axis)
    a = axis / L if L > 0 else Z
    ref = X if abs(a @ X) < 0.9 else Z
    u = normalize(np.cross(a, ref))
    w = np.cross(a, u)
    ang = 2.0 * np.pi * np.arange(n_around) / n_around
    radial = np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * w
    rings, normals = [], []
    # bottom hemisphere (south pole up to equator), then top
    for k in range(n_lat, -1, -1):
        phi = 0.5 * np.pi * k / n_lat
        d = np.cos(phi) * radial - np.sin(phi) * a
        rings.append(p0 + radius * d)
        normals.append(d)
    for k in range(0, n_lat + 1):
        phi = 0.5 * np.pi * k / n_lat
        d = np.cos(phi) * radial + np.sin(phi) * a
        rings.append(p1 + radius * d)
        normals.append(d)
    # first and last rings are degenerate poles; keep them as rings for simple indexing
    V = np.concatenate(rings)
    N = np.concatenate(normals)
    faces = []
    nr = len(rings)
    for r in range(nr - 1):
        for i in range(n_around):
            j = (i + 1) % n_around
            a0, a1 = r * n_around + i, r * n_around + j
            b0, b1 = (r + 1) * n_around + i, (r + 1) * n_around + j
            if r != 0:
                faces.append((a0, a1, b1))
            if r != nr - 2:
                faces.append((a0, b1, b0))
    # weld the pole rings
    V[:n_around] = p0 - radius * a
    V[-n_around:] = p1 + radius * a
    return TriMesh(V, np.array(faces), N)


def hand_meshes(kin: HandKinematics, pose: GraspPose):
    """One closed capsule mesh per capsule, in world frame."""
    seg, rad, _ = capsule_segments(kin, link_frames(kin, pose))
    return [capsule_mesh(s[0], s[1], r) for s, r in zip(seg, rad)]


def hand_mesh(kin: HandKinematics, pose: GraspPose) -> TriMesh:
    meshes = []
    _, _, lid = capsule_segments(kin, link_frames(kin, pose))
    for m, li in zip(hand_meshes(kin, pose), lid):
        meshes.append(TriMesh(m.vertices, m.faces, m.normals, np.full(m.n_faces, li),
                              {int(li): kin.links[li].name}))
    return concatenate(meshes)
