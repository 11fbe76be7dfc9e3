"""Convex hulls in half-space form, outward offsetting and ray exit queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix
from scipy.spatial import ConvexHull as _QHull
from scipy.spatial import HalfspaceIntersection, QhullError, cKDTree

from ..errors import DegenerateHull, NoIntersection, OriginOutsideHull
from .mesh import normalize

HULL_TOL = 1e-7


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValueError("ray direction must be non-zero")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "direction", d / n)


@dataclass(frozen=True)
class ConvexHull:
    """Bounded convex polytope ``{p : normals @ p <= offsets}``."""

    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray

    def contains(self, p, tol=HULL_TOL) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return np.all(p @ self.normals.T <= self.offsets + tol, axis=1)

    @property
    def volume(self) -> float:
        return float(_QHull(self.vertices).volume)


def _merge_coplanar(normals, offsets, tol=1e-9):
    eq = np.concatenate([normals, offsets[:, None]], axis=1)
    pairs = cKDTree(eq).query_pairs(tol, output_type="ndarray")
    n = len(eq)
    if len(pairs) == 0:
        keep = np.arange(n)
    else:
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, comp = connected_components(g, directed=False)
        _, keep = np.unique(comp, return_index=True)
        keep = np.sort(keep)
    return normalize(normals[keep]), offsets[keep]


def convex_hull(points) -> ConvexHull:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 4:
        raise DegenerateHull("need at least 4 points")
    try:
        qh = _QHull(pts)
    except QhullError as exc:
        raise DegenerateHull(f"degenerate point set: {exc.args[0].splitlines()[0]}") from exc
    normals, offsets = _merge_coplanar(qh.equations[:, :3], -qh.equations[:, 3])
    # qhull offsets carry ~1e-16 error; widen so every input satisfies the constraint exactly
    slack = (pts @ normals.T - offsets).max(axis=0)
    offsets = offsets + np.maximum(slack, 0.0)
    return ConvexHull(normals, offsets, pts[qh.vertices])


def _hull_vertices(normals, offsets, interior):
    hs = np.concatenate([normals, -offsets[:, None]], axis=1)
    inter = HalfspaceIntersection(hs, interior).intersections
    if len(inter) == 0:
        return inter
    scale = max(1.0, float(np.abs(inter).max()))
    _, keep = np.unique(np.round(inter / scale, 10), axis=0, return_index=True)
    return inter[np.sort(keep)]


def expand_hull(hull: ConvexHull, offset: float) -> ConvexHull:
    """Push every face outward by ``offset`` (half-space offsetting, not a Minkowski sum)."""
    if offset < 0:
        raise ValueError("offset must be non-negative")
    if offset == 0:
        return hull
    offsets = hull.offsets + float(offset)
    interior = hull.vertices.mean(axis=0)
    return ConvexHull(hull.normals, offsets, _hull_vertices(hull.normals, offsets, interior))


def ray_hull_intersect(ray: Ray, hull: ConvexHull) -> np.ndarray:
    """Exit point of a ray cast from inside the hull."""
    o, d = ray.origin, ray.direction
    slack = hull.offsets - hull.normals @ o
    if np.any(slack < -HULL_TOL):
        raise OriginOutsideHull(f"ray origin {o.tolist()} lies outside the hull")
    nd = hull.normals @ d
    ahead = nd > 1e-15
    if not np.any(ahead):
        raise NoIntersection("ray never leaves the half-space set")
    t = np.min(np.maximum(slack[ahead], 0.0) / nd[ahead])
    return o + t * d
