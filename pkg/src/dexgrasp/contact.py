"""From 2D region and point selections to 3D contact index sets on the object cloud."""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.neighbors import KNeighborsClassifier

from .errors import EmptyMask, InvalidContactPixel, NoVisibleContact, UnknownRegion
from .geometry.cloud import OrientedPointCloud
from .geometry.mesh import TriMesh
from .render.camera import PinholeCamera
from .render.io import load_mask, save_png
from .render.raster import RenderResult

CONTACT, EXCLUSIVE, UNLABELED = 1, 0, -1


@dataclass
class Region:
    id: int
    mask: np.ndarray
    name: str


class PartAnnotation:
    """Uniquely numbered, pairwise-disjoint region masks over one image."""

    def __init__(self, regions: Sequence[Region]):
        ids = [r.id for r in regions]
        if len(set(ids)) != len(ids):
            raise ValueError("region ids must be unique")
        shapes = {np.asarray(r.mask).shape for r in regions}
        if len(shapes) > 1:
            raise ValueError("region masks must share one image size")
        self.regions: List[Region] = [Region(int(r.id), np.asarray(r.mask, dtype=bool), r.name) for r in regions]

    def __len__(self):
        return len(self.regions)

    @property
    def ids(self) -> List[int]:
        return [r.id for r in self.regions]

    def region(self, rid: int) -> Region:
        for r in self.regions:
            if r.id == int(rid):
                return r
        raise UnknownRegion(f"region {rid} is not in the annotation (have {self.ids})")

    def name_of(self, rid: int) -> str:
        return self.region(rid).name

    def ids_for_names(self, names) -> List[int]:
        names = set(names)
        return [r.id for r in self.regions if r.name in names]

    def as_pairs(self):
        return [(r.id, r.mask) for r in self.regions]

    @classmethod
    def from_render(cls, rendered: RenderResult, mesh: TriMesh, mesh_slot: int = 0) -> "PartAnnotation":
        """One region per visible mesh part; region id = part label + 1."""
        if mesh.face_parts is None:
            raise ValueError("mesh carries no part labels")
        hit = (rendered.mesh_index == mesh_slot) & (rendered.face_index >= 0)
        parts = np.full(hit.shape, -1, dtype=np.int64)
        parts[hit] = mesh.face_parts[rendered.face_index[hit]]
        regions = []
        for p in sorted(set(np.unique(parts[hit]).tolist())):
            regions.append(Region(p + 1, parts == p, mesh.part_names.get(p, f"part {p}")))
        return cls(regions)

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        index = []
        for r in self.regions:
            fname = f"region_{r.id:03d}.png"
            save_png(d / fname, r.mask)
            index.append({"id": r.id, "name": r.name, "file": fname})
        path = d / "index.json"
        path.write_text(json.dumps(index, indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, directory) -> "PartAnnotation":
        d = Path(directory)
        rows = json.loads((d / "index.json").read_text(encoding="utf-8"))
        return cls([Region(int(r["id"]), load_mask(d / r["file"]), str(r["name"])) for r in rows])


@dataclass
class ContactSet:
    hand: np.ndarray  # M_hand, indices into the object cloud
    functional: np.ndarray  # M_func
    thumb: Optional[np.ndarray] = None  # per-finger point contacts, set when point-level inference ran
    index: Optional[np.ndarray] = None
    provenance: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.hand = np.asarray(self.hand, dtype=np.int64)
        self.functional = np.asarray(self.functional, dtype=np.int64)
        for name in ("thumb", "index"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=np.int64))

    @property
    def has_points(self) -> bool:
        return self.thumb is not None and self.index is not None

    def validate(self, n_points: int) -> None:
        for name in ("hand", "functional", "thumb", "index"):
            v = getattr(self, name)
            if v is not None and len(v) and (v.min() < 0 or v.max() >= n_points):
                raise ValueError(f"{name} contact index out of range")
        if self.has_points and (len(self.thumb) == 0 or len(self.index) == 0):
            raise ValueError("point-level contacts must be non-empty")

    def to_dict(self) -> dict:
        out = {"hand": self.hand.tolist(), "functional": self.functional.tolist(),
               "provenance": self.provenance}
        if self.has_points:
            out["thumb"] = self.thumb.tolist()
            out["index"] = self.index.tolist()
        return out


def merge_selected_parts(annot: PartAnnotation, ids) -> np.ndarray:
    """Pixelwise union of the selected region masks."""
    ids = list(ids)
    if not ids:
        raise EmptyMask("no regions selected")
    out = None
    for rid in ids:
        m = annot.region(rid).mask
        out = m.copy() if out is None else out | m
    return out


@dataclass(frozen=True)
class LiftConfig:
    depth_tolerance: float = 0.005  # m, visibility test
    r_near: float = 0.02  # m, propagation neighbourhood
    kmeans_k: int = 8
    knn_k: int = 5
    point_radius: float = 0.01  # m, spherical expansion of point contacts
    seed: int = 0
    grazing_cos: float = 0.2  # visible points seen more obliquely than this are left to propagation

    def as_dict(self) -> dict:
        return asdict(self)


def fallback_features(obj: OrientedPointCloud) -> np.ndarray:
    """[position / diameter, normal] per point."""
    diam = obj.diameter if obj.diameter > 0 else 1.0
    return np.concatenate([obj.points / diam, obj.normals], axis=1)


def visible_points(obj: OrientedPointCloud, depth, camera: PinholeCamera, tol: float):
    """Visibility per point plus its sub-pixel projection (u = column, v = row)."""
    depth = np.asarray(depth, dtype=float)
    u, v, z = camera.project(obj.points)
    col, row = np.rint(u).astype(np.int64), np.rint(v).astype(np.int64)
    on = (z > 0) & (col >= 0) & (col < depth.shape[1]) & (row >= 0) & (row < depth.shape[0])
    vis = np.zeros(len(obj), dtype=bool)
    d = depth[row[on], col[on]]
    vis[on] = (d > 0) & (np.abs(z[on] - d) <= tol)
    return vis, u, v


def mask_votes(mask, u, v):
    """Mask values at the four pixel centres around each sub-pixel location.

    Returns (inside, unanimous): ``inside`` is the value at the rounded pixel
    and ``unanimous`` says whether all four surrounding centres agree.
    """
    mask = np.asarray(mask, dtype=bool)
    H, W = mask.shape
    c0 = np.clip(np.floor(u).astype(np.int64), 0, W - 1)
    r0 = np.clip(np.floor(v).astype(np.int64), 0, H - 1)
    c1, r1 = np.minimum(c0 + 1, W - 1), np.minimum(r0 + 1, H - 1)
    s = (mask[r0, c0].astype(int) + mask[r0, c1] + mask[r1, c0] + mask[r1, c1])
    inside = mask[np.clip(np.rint(v).astype(np.int64), 0, H - 1), np.clip(np.rint(u).astype(np.int64), 0, W - 1)]
    return inside, (s == 0) | (s == 4)


def lift_labels(mask, depth, camera: PinholeCamera, obj: OrientedPointCloud,
                cfg: LiftConfig = LiftConfig()) -> np.ndarray:
    """Per-point label: CONTACT, EXCLUSIVE or UNLABELED (far from any contact point).

    Visible points are labelled directly from the mask, except those whose
    four surrounding pixel centres disagree (mask edges). Those and hidden
    points are then grown outward from the contact set: each wave takes the
    unlabelled points within ``r_near`` of a contact point, clusters them
    with K-Means in feature space, and gives every cluster the majority of
    its members' KNN votes among the labelled points. Waves repeat until
    nothing new is reached.
    """
    mask = np.asarray(mask, dtype=bool)
    depth = np.asarray(depth, dtype=float)
    if mask.shape != depth.shape:
        raise ValueError("mask and depth shapes differ")
    vis, u, v = visible_points(obj, depth, camera, cfg.depth_tolerance)
    labels = np.full(len(obj), UNLABELED, dtype=np.int64)
    inside, unanimous = mask_votes(mask, u[vis], v[vis])
    labels[vis] = np.where(inside, CONTACT, EXCLUSIVE)
    view = camera.center - obj.points[vis]
    facing = np.einsum("ij,ij->i", obj.normals[vis], view) / np.maximum(np.linalg.norm(view, axis=1), 1e-12)
    seam = np.flatnonzero(vis)[~unanimous | (facing < cfg.grazing_cos)]
    if not np.any(labels == CONTACT):
        raise NoVisibleContact("no visible object point falls inside the contact mask")
    # points straddling a mask edge or seen edge-on at the silhouette are decided by propagation, like hidden ones
    if np.any(np.delete(labels, seam) == CONTACT):
        labels[seam] = UNLABELED
    feats = obj.features if obj.features is not None else fallback_features(obj)
    tree = obj.tree
    frontier = np.flatnonzero(labels == CONTACT)
    while len(frontier):
        near = np.unique(np.concatenate(
            [np.asarray(n, dtype=np.int64) for n in tree.query_ball_point(obj.points[frontier], cfg.r_near)]))
        cand = near[labels[near] == UNLABELED]
        if len(cand) == 0:
            break
        known = np.flatnonzero(labels != UNLABELED)
        knn = KNeighborsClassifier(n_neighbors=min(cfg.knn_k, len(known)))
        knn.fit(feats[known], labels[known])
        votes = knn.predict(feats[cand])
        n_distinct = len(np.unique(feats[cand], axis=0))
        k = max(1, min(cfg.kmeans_k, len(cand), n_distinct))
        if k > 1:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                cluster = KMeans(n_clusters=k, n_init=4, random_state=cfg.seed).fit_predict(feats[cand])
        else:
            cluster = np.zeros(len(cand), dtype=np.int64)
        for c in np.unique(cluster):
            members = cluster == c
            n_contact = int(np.sum(votes[members] == CONTACT))
            labels[cand[members]] = CONTACT if 2 * n_contact > members.sum() else EXCLUSIVE
        frontier = cand[labels[cand] == CONTACT]
    return labels


def lift_mask_to_3d(mask, depth, camera: PinholeCamera, obj: OrientedPointCloud,
                    cfg: LiftConfig = LiftConfig()) -> np.ndarray:
    """Indices of object points labelled as contact."""
    return np.flatnonzero(lift_labels(mask, depth, camera, obj, cfg) == CONTACT)


def expand_point_contact(pixel, depth, camera: PinholeCamera, obj: OrientedPointCloud, radius: float) -> np.ndarray:
    """Object points within ``radius`` of the back-projected pixel (x = column, y = row)."""
    depth = np.asarray(depth, dtype=float)
    x, y = (int(round(float(c))) for c in pixel)
    if not (0 <= y < depth.shape[0] and 0 <= x < depth.shape[1]) or depth[y, x] <= 0:
        raise InvalidContactPixel(f"pixel ({x}, {y}) has no depth")
    p = camera.unproject([x], [y], [depth[y, x]])[0]
    return np.array(sorted(obj.tree.query_ball_point(p, max(float(radius), 0.0))), dtype=np.int64)


def point_anchor(pixel, depth, camera: PinholeCamera) -> np.ndarray:
    depth = np.asarray(depth, dtype=float)
    x, y = (int(round(float(c))) for c in pixel)
    if not (0 <= y < depth.shape[0] and 0 <= x < depth.shape[1]) or depth[y, x] <= 0:
        raise InvalidContactPixel(f"pixel ({x}, {y}) has no depth")
    return camera.unproject([x], [y], [depth[y, x]])[0]


def should_infer_points(thumb_part, index_part, force_flag: bool = False) -> bool:
    """Point-level inference runs when forced or when the functional fingers disagree on the part."""
    return bool(force_flag) or thumb_part != index_part


def majority_part(obj: OrientedPointCloud, idx) -> Optional[int]:
    if obj.part_labels is None or len(idx) == 0:
        return None
    return Counter(obj.part_labels[np.asarray(idx)].tolist()).most_common(1)[0][0]


def nearest_within(obj: OrientedPointCloud, p, radius: float) -> np.ndarray:
    """Like a ball query but never empty: falls back to the single nearest point."""
    idx = obj.tree.query_ball_point(np.asarray(p, dtype=float), radius)
    if idx:
        return np.array(sorted(idx), dtype=np.int64)
    return np.array([int(obj.tree.query(np.asarray(p, dtype=float))[1])], dtype=np.int64)


__all__ = [
    "CONTACT", "EXCLUSIVE", "UNLABELED", "ContactSet", "LiftConfig", "PartAnnotation", "Region",
    "expand_point_contact", "fallback_features", "lift_labels", "lift_mask_to_3d", "majority_part",
    "mask_votes", "merge_selected_parts", "nearest_within", "point_anchor", "should_infer_points", "visible_points",
]
