"""Oriented point clouds: surface sampling, nearest-neighbour and penetration queries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from ..errors import EmptyCloud, InvalidMesh
from .mesh import TriMesh, normalize

DEFAULT_SAMPLE_COUNT = 4096


@dataclass(frozen=True)
class OrientedPointCloud:
    points: np.ndarray
    normals: np.ndarray
    features: Optional[np.ndarray] = None
    part_labels: Optional[np.ndarray] = None
    part_names: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        p = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 3)
        n = np.ascontiguousarray(self.normals, dtype=float).reshape(-1, 3)
        if n.shape != p.shape:
            raise ValueError("points and normals must have equal length")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "normals", n)
        if self.features is not None:
            f = np.ascontiguousarray(self.features, dtype=float)
            if f.ndim != 2 or f.shape[0] != len(p):
                raise ValueError("features must be (N, F)")
            object.__setattr__(self, "features", f)
        if self.part_labels is not None:
            lab = np.asarray(self.part_labels, dtype=np.int64).reshape(-1)
            if lab.shape[0] != len(p):
                raise ValueError("part_labels must have one entry per point")
            object.__setattr__(self, "part_labels", lab)

    def __len__(self):
        return int(self.points.shape[0])

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    @cached_property
    def diameter(self) -> float:
        if len(self) == 0:
            return 0.0
        ext = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.linalg.norm(ext))

    @cached_property
    def mean_spacing(self) -> float:
        """Mean distance from each point to its nearest other point."""
        if len(self) < 2:
            return 0.0
        d, _ = self.tree.query(self.points, k=2)
        return float(d[:, 1].mean())

    def subset(self, idx) -> "OrientedPointCloud":
        idx = np.asarray(idx, dtype=np.int64)
        return OrientedPointCloud(
            self.points[idx], self.normals[idx],
            None if self.features is None else self.features[idx],
            None if self.part_labels is None else self.part_labels[idx],
            dict(self.part_names),
        )

    def with_features(self, features) -> "OrientedPointCloud":
        return OrientedPointCloud(self.points, self.normals, features, self.part_labels,
                                  dict(self.part_names))


def sample_surface(mesh: TriMesh, n: int = DEFAULT_SAMPLE_COUNT, seed: int = 0) -> OrientedPointCloud:
    """Area-weighted uniform samples with barycentrically interpolated normals."""
    if mesh.n_faces == 0:
        raise InvalidMesh("cannot sample an empty mesh")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    total = areas.sum()
    if not total > 0:
        raise InvalidMesh("mesh has zero surface area")
    face = rng.choice(mesh.n_faces, size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    w = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    tri = mesh.triangles[face]
    pts = np.einsum("nk,nkd->nd", w, tri)
    nrm = np.einsum("nk,nkd->nd", w, mesh.normals[mesh.faces[face]])
    # interpolated normals can cancel on sharp creases
    fallback = np.linalg.norm(nrm, axis=1) < 1e-6
    nrm[fallback] = mesh.face_normals[face[fallback]]
    labels = None if mesh.face_parts is None else mesh.face_parts[face]
    return OrientedPointCloud(pts, normalize(nrm), None, labels, dict(mesh.part_names))


def nearest_point(cloud: OrientedPointCloud, q) -> Tuple[int, float]:
    """Exact nearest neighbour of ``q``; ties go to the lowest index."""
    idx, dist = nearest_points(cloud, np.asarray(q, dtype=float).reshape(1, 3))
    return int(idx[0]), float(dist[0])


def nearest_points(cloud: OrientedPointCloud, queries):
    """Vectorised :func:`nearest_point` for an (M, 3) array of queries."""
    if len(cloud) == 0:
        raise EmptyCloud("nearest-neighbour query on an empty cloud")
    q = np.asarray(queries, dtype=float).reshape(-1, 3)
    if len(cloud) == 1 or len(q) == 0:
        d, i = cloud.tree.query(q, k=1)
        return np.asarray(i, dtype=np.int64).reshape(-1), np.asarray(d, dtype=float).reshape(-1)
    _, i = cloud.tree.query(q, k=2)
    # exact distances recomputed so tie detection does not depend on tree rounding
    dd = np.sqrt(((cloud.points[i] - q[:, None, :]) ** 2).sum(axis=2))
    first = np.where(dd[:, 1] < dd[:, 0], 1, 0)
    idx = i[np.arange(len(q)), first].astype(np.int64)
    best = dd[np.arange(len(q)), first]
    for r in np.flatnonzero(dd[:, 0] == dd[:, 1]):
        cand = np.asarray(cloud.tree.query_ball_point(q[r], best[r] * (1 + 1e-9) + 1e-15), dtype=np.int64)
        cd = np.sqrt(((cloud.points[cand] - q[r]) ** 2).sum(axis=1))
        idx[r] = cand[cd == cd.min()].min()
        best[r] = cd.min()
    return idx, best


def signed_penetration(q, surface: OrientedPointCloud) -> np.ndarray:
    """Signed depth of query point(s) below the surface; positive means inside."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    idx, _ = nearest_points(surface, q.reshape(-1, 3))
    d = np.einsum("ij,ij->i", surface.points[idx] - q.reshape(-1, 3), surface.normals[idx])
    return float(d[0]) if single else d


# ---------------------------------------------------------------- file I/O

def save_cloud(cloud: OrientedPointCloud, header_path) -> None:
    """JSON header plus a row-major little-endian float32 blob next to it.

    Rows are ``[x, y, z, nx, ny, nz, *features, label?]``.
    """
    header_path = Path(header_path)
    blob_path = header_path.with_suffix(".bin")
    cols = [cloud.points, cloud.normals]
    fw = 0
    if cloud.features is not None:
        cols.append(cloud.features)
        fw = cloud.features.shape[1]
    if cloud.part_labels is not None:
        cols.append(cloud.part_labels[:, None].astype(float))
    blob = np.concatenate(cols, axis=1).astype("<f4")
    header = {
        "count": len(cloud),
        "feature_width": fw,
        "has_part_labels": cloud.part_labels is not None,
        "part_label_map": {str(k): v for k, v in sorted(cloud.part_names.items())},
        "blob": blob_path.name,
    }
    header_path.write_text(json.dumps(header, indent=2, sort_keys=True), encoding="utf-8")
    blob_path.write_bytes(blob.tobytes())


def load_cloud(header_path) -> OrientedPointCloud:
    header_path = Path(header_path)
    header = json.loads(header_path.read_text(encoding="utf-8"))
    n, fw = int(header["count"]), int(header["feature_width"])
    has_lab = bool(header.get("has_part_labels", False))
    width = 6 + fw + (1 if has_lab else 0)
    raw = np.frombuffer((header_path.parent / header["blob"]).read_bytes(), dtype="<f4")
    rows = raw.reshape(n, width).astype(float)
    return OrientedPointCloud(
        rows[:, :3], rows[:, 3:6],
        rows[:, 6:6 + fw] if fw else None,
        np.rint(rows[:, -1]).astype(np.int64) if has_lab else None,
        {int(k): v for k, v in header.get("part_label_map", {}).items()},
    )


def save_features(features, header_path) -> None:
    header_path = Path(header_path)
    f = np.asarray(features, dtype="<f4")
    blob_path = header_path.with_suffix(".bin")
    header_path.write_text(json.dumps({"count": int(f.shape[0]), "feature_width": int(f.shape[1]),
                                       "blob": blob_path.name}, indent=2, sort_keys=True))
    blob_path.write_bytes(f.tobytes())


def load_features(header_path) -> np.ndarray:
    header_path = Path(header_path)
    header = json.loads(header_path.read_text(encoding="utf-8"))
    raw = np.frombuffer((header_path.parent / header["blob"]).read_bytes(), dtype="<f4")
    return raw.reshape(int(header["count"]), int(header["feature_width"])).astype(float)
