"""Voxelised intersection volume of closed meshes via +x ray parity."""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

from .mesh import TriMesh

# fixed irrational-ish offsets keep ray origins off triangle edges
_JITTER = np.array([1.2345678e-7, 2.7182818e-7])

MeshLike = Union[TriMesh, Sequence[TriMesh]]


def _as_list(m: MeshLike):
    return [m] if isinstance(m, TriMesh) else list(m)


def _column_crossings(mesh: TriMesh, ys, zs):
    """x-coordinates where +x rays through the (ys, zs) grid cross the mesh.

    Returns (column_index, x) pairs; column index = iy * len(zs) + iz.
    """
    tri = mesh.triangles
    ny, nz = len(ys), len(zs)
    y0, dy = ys[0], (ys[1] - ys[0]) if ny > 1 else 1.0
    z0, dz = zs[0], (zs[1] - zs[0]) if nz > 1 else 1.0
    cols, xs = [], []
    for a, b, c in tri:
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        iy0 = max(0, int(np.ceil((lo[1] - y0) / dy)))
        iy1 = min(ny - 1, int(np.floor((hi[1] - y0) / dy)))
        iz0 = max(0, int(np.ceil((lo[2] - z0) / dz)))
        iz1 = min(nz - 1, int(np.floor((hi[2] - z0) / dz)))
        if iy1 < iy0 or iz1 < iz0:
            continue
        yy, zz = np.meshgrid(ys[iy0:iy1 + 1], zs[iz0:iz1 + 1], indexing="ij")
        # barycentric in the yz projection
        d = (b[1] - a[1]) * (c[2] - a[2]) - (c[1] - a[1]) * (b[2] - a[2])
        if abs(d) < 1e-30:
            continue
        py, pz = yy - a[1], zz - a[2]
        u = (py * (c[2] - a[2]) - pz * (c[1] - a[1])) / d
        v = (pz * (b[1] - a[1]) - py * (b[2] - a[2])) / d
        inside = (u >= 0) & (v >= 0) & (u + v <= 1)
        if not inside.any():
            continue
        x = a[0] + u[inside] * (b[0] - a[0]) + v[inside] * (c[0] - a[0])
        iy, iz = np.nonzero(inside)
        cols.append((iy + iy0) * nz + (iz + iz0))
        xs.append(x)
    if not cols:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.concatenate(cols), np.concatenate(xs)


def _inside_intervals(mesh, ys, zs):
    """Per column, sorted list of [x_in, x_out) intervals; odd crossings drop the last."""
    col, x = _column_crossings(mesh, ys, zs)
    order = np.lexsort((x, col))
    col, x = col[order], x[order]
    out = {}
    if len(col) == 0:
        return out
    starts = np.flatnonzero(np.r_[True, col[1:] != col[:-1]])
    ends = np.r_[starts[1:], len(col)]
    for s, e in zip(starts, ends):
        k = (e - s) // 2 * 2
        if k:
            out[int(col[s])] = x[s:s + k].reshape(-1, 2)
    return out


def _union(interval_sets):
    iv = np.concatenate(interval_sets)
    iv = iv[np.argsort(iv[:, 0])]
    merged = [iv[0].copy()]
    for a, b in iv[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append(np.array([a, b]))
    return np.array(merged)


def _intersect(p, q):
    out = []
    i = j = 0
    while i < len(p) and j < len(q):
        lo, hi = max(p[i][0], q[j][0]), min(p[i][1], q[j][1])
        if lo < hi:
            out.append((lo, hi))
        if p[i][1] < q[j][1]:
            i += 1
        else:
            j += 1
    return out


def _columns(meshes, ys, zs):
    per_mesh = [_inside_intervals(m, ys, zs) for m in meshes]
    keys = set().union(*per_mesh) if per_mesh else set()
    return {k: _union([pm[k] for pm in per_mesh if k in pm]) for k in keys}


def intersection_volume(a: MeshLike, b: MeshLike, voxel: float = 0.002) -> float:
    """Volume (cm^3) of voxel centres lying inside both ``a`` and ``b``.

    Each argument may be a single closed mesh or a sequence of closed meshes
    whose union is taken (per-component parity, so overlapping parts such as
    hand capsules are handled correctly).
    """
    if voxel <= 0:
        raise ValueError("voxel must be positive")
    ma, mb = _as_list(a), _as_list(b)
    lo = np.maximum(np.min([m.bounds[0] for m in ma], axis=0), np.min([m.bounds[0] for m in mb], axis=0))
    hi = np.minimum(np.max([m.bounds[1] for m in ma], axis=0), np.max([m.bounds[1] for m in mb], axis=0))
    if np.any(hi <= lo):
        return 0.0
    # grid anchored at the origin so results do not depend on argument order
    i_lo = np.floor(lo / voxel).astype(int)
    i_hi = np.ceil(hi / voxel).astype(int)
    centers = [voxel * (np.arange(i_lo[k], i_hi[k]) + 0.5) for k in range(3)]
    ys = centers[1] + _JITTER[0]
    zs = centers[2] + _JITTER[1]
    xs = centers[0]
    ca, cb = _columns(ma, ys, zs), _columns(mb, ys, zs)
    count = 0
    for key in ca.keys() & cb.keys():
        for x0, x1 in _intersect(ca[key], cb[key]):
            count += int(np.searchsorted(xs, x1, side="left") - np.searchsorted(xs, x0, side="left"))
    return count * voxel ** 3 * 1e6


def inside_mesh(mesh: MeshLike, points) -> np.ndarray:
    """Ray-parity inside test for arbitrary points (union over components)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    result = np.zeros(len(pts), dtype=bool)
    for m in _as_list(mesh):
        tri = m.triangles
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        e1, e2 = b - a, c - a
        d = np.array([1.0, 0.0, 0.0])
        h = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, h)
        ok = np.abs(det) > 1e-30
        for i, p in enumerate(pts):
            o = p + np.array([0.0, _JITTER[0], _JITTER[1]])
            s = o - a
            u = np.einsum("ij,ij->i", s, h) / np.where(ok, det, 1.0)
            q = np.cross(s, e1)
            v = (q @ d) / np.where(ok, det, 1.0)
            t = np.einsum("ij,ij->i", e2, q) / np.where(ok, det, 1.0)
            hits = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
            if hits.sum() % 2 == 1:
                result[i] = True
    return result
